"""Parameter vectors on disk: one layout header line, one CSV row of values.

    # fractalscape-theta kind=tanh-net-gaussian n=2 m=1 r=8 p=25
    0.0123,-0.045,...

Values are written with 17 significant digits, which round-trips float64.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import LayoutMismatch
from .policies import PolicySpec

HEADER = "# fractalscape-theta"


def format_theta(theta, spec: PolicySpec | None = None) -> str:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if spec is not None and len(theta) != spec.n_params:
        raise LayoutMismatch(f"{spec.kind.value} expects {spec.n_params} values, got {len(theta)}")
    fields = [HEADER]
    if spec is not None:
        fields += [f"kind={spec.kind.value}", f"n={spec.n}", f"m={spec.m}", f"r={spec.r}"]
        if spec.beta != 1.0:
            fields.append(f"beta={spec.beta!r}")
    fields.append(f"p={len(theta)}")
    row = ",".join(f"{v:.17g}" for v in theta)
    return " ".join(fields) + "\n" + row + "\n"


def write_theta(path, theta, spec: PolicySpec | None = None) -> None:
    Path(path).write_text(format_theta(theta, spec))


def parse_theta(text: str) -> tuple[np.ndarray, dict]:
    """Parse file contents into ``(theta, header fields)``."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if len(lines) != 2 or not lines[0].startswith(HEADER):
        raise LayoutMismatch("expected a layout header line followed by one CSV row")
    meta = {}
    for tok in lines[0][len(HEADER):].split():
        key, _, val = tok.partition("=")
        meta[key] = val
    if "p" not in meta:
        raise LayoutMismatch("layout header lacks p=<count>")
    try:
        theta = np.array([float(v) for v in lines[1].split(",")])
        p = int(meta["p"])
    except ValueError as exc:
        raise LayoutMismatch(str(exc)) from None
    if len(theta) != p:
        raise LayoutMismatch(f"header declares p={p} but the row has {len(theta)} values")
    return theta, meta


def spec_from_meta(meta: dict) -> PolicySpec | None:
    if "kind" not in meta:
        return None
    return PolicySpec(
        meta["kind"], n=int(meta["n"]), m=int(meta["m"]), r=int(meta["r"]), beta=float(meta.get("beta", 1.0))
    )


def read_theta(path, spec: PolicySpec | None = None) -> np.ndarray:
    theta, meta = parse_theta(Path(path).read_text())
    declared = spec_from_meta(meta)
    if spec is not None:
        if declared is not None and declared != spec:
            raise LayoutMismatch(f"file layout {declared} does not match {spec}")
        if len(theta) != spec.n_params:
            raise LayoutMismatch(f"{spec.kind.value} expects {spec.n_params} values, got {len(theta)}")
    return theta
