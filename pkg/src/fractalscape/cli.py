"""Command-line entry point: ``fractalscape <subcommand> [options]``.

Results go to stdout as JSON; numeric series go to CSV files named by
``--out``. Exit status is 0 on success, 2 for invalid input and 3 for a
numerical failure (non-finite state, too few usable points).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .envs import ENV_NAMES, make_env
from .errors import InsufficientPoints, NonFiniteState
from .experiments import (
    FIGURES,
    ReproConfig,
    config_from_manifest,
    holder_fit_objective,
    run_figure,
    write_scan_csv,
    write_sweep_csv,
)
from .holder import HolderConfig
from .landscape import roughness, scan, sweep
from .lyapunov import MleConfig, estimate_mle, estimate_mle_stochastic, exceeds_discount_threshold, mle_sweep
from .policies import PolicyKind, PolicySpec, init_theta
from .policygrad import GradConfig, estimate_gradient
from .rng import master_seed, substream
from .rollout import RolloutConfig, objective, tail_bound
from .theta_io import read_theta, write_theta

EXIT_INVALID = 2
EXIT_NUMERICAL = 3

_GAUSSIAN_OF = {PolicyKind.LINEAR_DET: "linear-gaussian", PolicyKind.TANH_NET_DET: "tanh-net-gaussian"}


class ConfigError(ValueError):
    pass


def _grid(text: str) -> tuple[float, float, int]:
    try:
        lo, hi, n = text.split(":")
        return float(lo), float(hi), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:n, got {text!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_common(p: argparse.ArgumentParser, gamma: bool = True):
    p.add_argument("--env", required=True, choices=ENV_NAMES)
    p.add_argument("--policy", default="linear", choices=[k.value for k in PolicyKind])
    p.add_argument("--hidden", type=int, default=8, help="hidden width r of the tanh net")
    p.add_argument("--sigma", type=float, help="exploration std; turns linear/tanh-net into its Gaussian kind")
    p.add_argument("--theta", help="parameter file, or comma-separated values (default: seeded init)")
    p.add_argument("--s0", type=_floats, help="initial state, comma-separated")
    if gamma:
        p.add_argument("--gamma", type=float, default=0.9)
        p.add_argument("--horizon", type=int, default=1000)
    p.add_argument("--seed", type=int, help="master seed (else $FRACTALSCAPE_SEED, else built-in)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fractalscape", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="truncated discounted objective J(theta)")
    _add_common(p)
    p.add_argument("--stochastic", action="store_true")
    p.add_argument("--paths", type=int, default=16)

    p = sub.add_parser("mle", help="maximal Lyapunov exponent of the closed loop")
    _add_common(p)
    p.add_argument("--stochastic", action="store_true", help="exponent of the path-averaged separation")
    p.add_argument("--grid", type=_grid, help="sweep a scalar parameter over lo:hi:n (CSV output)")
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--paths", type=int, default=64)
    p.add_argument("--out", help="CSV path for --grid sweeps (default: stdout)")

    p = sub.add_parser("holder", help="variance-scaling Hölder slope of J around theta")
    _add_common(p)
    p.add_argument("--sigma-grid", type=_grid, default=(1e-5, 1e-2, 12), help="log-spaced lo:hi:n")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--scan-sigma", action="store_true", help="also perturb the log-sigma coordinate")
    p.add_argument("--out", help="CSV path for the (sigma, variance) pairs")

    p = sub.add_parser("grad", help="score-function policy gradient")
    _add_common(p)
    p.add_argument("--episodes", type=int, default=256)
    p.add_argument("--baseline", choices=["mean", "none"], default="mean")
    p.add_argument("--undiscounted-visitation", action="store_true", help="drop the gamma^t weight on scores")
    p.add_argument("--out", help="parameter file receiving eta")

    p = sub.add_parser("scan", help="J along theta + delta * direction")
    _add_common(p)
    p.add_argument("--direction", help="direction file or list (default: estimated gradient)")
    p.add_argument("--episodes", type=int, default=256, help="episodes for the default gradient direction")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--step-size", type=float, default=1e-7)
    p.add_argument("--normalize", action="store_true", help="divide the direction by its norm")
    p.add_argument("--stochastic", action="store_true")
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--scan-sigma", action="store_true", help="keep the log-sigma component of the direction")
    p.add_argument("--out", help="CSV path (columns delta,J,tail_bound)")

    p = sub.add_parser("sweep", help="J over a grid of a one-parameter family")
    _add_common(p)
    p.add_argument("--grid", type=_grid, required=True)
    p.add_argument("--out", help="CSV path (columns theta,J,tail_bound)")

    p = sub.add_parser("repro", help="regenerate a figure's data end to end")
    p.add_argument("figure", nargs="?", choices=FIGURES)
    p.add_argument("--manifest", help="rerun exactly the configuration recorded in a manifest.json")
    p.add_argument("--out", default=None, help="output directory (default: ./repro-<figure>)")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--horizon", type=int)
    p.add_argument("--samples", type=int, dest="holder_samples")
    p.add_argument("--episodes", type=int, dest="n_episodes")
    return parser


def _spec(args, env) -> PolicySpec:
    kind = PolicyKind(args.policy)
    if args.sigma is not None:
        if args.sigma <= 0:
            raise ConfigError("--sigma must be positive")
        kind = PolicyKind(_GAUSSIAN_OF.get(kind, kind.value))
        if not kind.value.endswith("gaussian"):
            raise ConfigError(f"--sigma does not apply to the {kind.value} policy")
    if kind is PolicyKind.UNIFORM_EXAMPLE3:
        return PolicySpec(kind)
    return PolicySpec(kind, n=env.state_dim, m=env.action_dim, r=args.hidden)


def _vector(text: str, spec: PolicySpec | None = None) -> np.ndarray:
    if Path(text).is_file():
        return read_theta(text, spec)
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"{text!r} is neither a file nor a comma-separated list") from None


def _theta(args, spec: PolicySpec, seed: int) -> np.ndarray:
    sigma0 = 0.1 if args.sigma is None else args.sigma
    if args.theta is None:
        return init_theta(spec, substream(seed, "theta0"), sigma0=sigma0)
    theta = _vector(args.theta, None)
    if spec.is_gaussian and len(theta) == spec.n_params - 1:
        theta = np.append(theta, math.log(sigma0))
    elif spec.is_gaussian and args.sigma is not None and len(theta) == spec.n_params:
        theta = theta.copy()
        theta[spec.sigma_index] = math.log(args.sigma)
    if len(theta) != spec.n_params:
        raise ConfigError(f"{spec.kind.value} policy needs {spec.n_params} parameters, got {len(theta)}")
    return theta


def _setup(args):
    env = make_env(args.env)
    spec = _spec(args, env)
    seed = master_seed(args.seed)
    theta = _theta(args, spec, seed)
    if args.s0 is not None and len(args.s0) != env.state_dim:
        raise ConfigError(f"{env.name} states have {env.state_dim} coordinates")
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    return env, spec, seed, theta


def _rcfg(args, seed, **kw) -> RolloutConfig:
    s0 = None if args.s0 is None else tuple(args.s0)
    return RolloutConfig(gamma=args.gamma, horizon=args.horizon, s0=s0, seed=seed, threads=args.threads, **kw)


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_eval(args) -> None:
    env, spec, seed, theta = _setup(args)
    cfg = _rcfg(args, seed, stochastic=args.stochastic, n_paths=args.paths)
    _emit({
        "J": objective(env, spec, theta, cfg),
        "tail_bound": tail_bound(env, cfg.gamma, cfg.horizon),
        "gamma": cfg.gamma,
        "horizon": cfg.horizon,
        "stochastic": cfg.stochastic,
    })


def cmd_mle(args) -> None:
    env, spec, seed, theta = _setup(args)
    cfg = MleConfig(t_max=args.steps, n_restarts=args.restarts, n_paths=args.paths, seed=seed)
    if args.grid is not None:
        if args.stochastic:
            raise ConfigError("--grid sweeps use the deterministic estimator")
        lo, hi, n = args.grid
        rows = mle_sweep(env, spec, np.linspace(lo, hi, n), args.s0, cfg)
        lines = ["theta,lambda,error"] + [
            f"{t!r},{'' if lam is None else repr(lam)},{err or ''}" for t, lam, err in rows
        ]
        text = "\n".join(lines) + "\n"
        if args.out:
            Path(args.out).write_text(text)
            lam = [x for _, x, _ in rows if x is not None]
            _emit({"out": args.out, "n_points": n, "n_failed": n - len(lam),
                   "positive_fraction": float(np.mean(np.array(lam) > 0)) if lam else None})
        else:
            sys.stdout.write(text)
        return
    est = (estimate_mle_stochastic if args.stochastic else estimate_mle)(env, spec, theta, args.s0, cfg)
    out = est.as_dict()
    out["discount_threshold"] = exceeds_discount_threshold(est.lambda_, args.gamma)
    _emit(out)


def cmd_holder(args) -> None:
    env, spec, seed, theta = _setup(args)
    lo, hi, n = args.sigma_grid
    if not 0 < lo < hi:
        raise ConfigError("--sigma-grid needs 0 < lo < hi")
    hcfg = HolderConfig(sigma_grid=tuple(np.logspace(math.log10(lo), math.log10(hi), n)),
                        n_samples=args.samples, seed=seed, scan_sigma=args.scan_sigma)
    fit, _ = holder_fit_objective(env, spec, theta, _rcfg(args, seed), hcfg)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("sigma,variance\n")
            for s, v in zip(fit.sigmas, fit.variances):
                fh.write(f"{s!r},{v!r}\n")
    _emit(fit.as_dict())


def _gradient(args, env, spec, seed, theta):
    cfg = GradConfig(
        n_episodes=args.episodes, gamma=args.gamma, horizon=args.horizon, seed=seed,
        discount_visitation=not getattr(args, "undiscounted_visitation", False),
        baseline=getattr(args, "baseline", "mean"),
        s0=None if args.s0 is None else tuple(args.s0), threads=args.threads,
    )
    return estimate_gradient(env, spec, theta, cfg)


def cmd_grad(args) -> None:
    env, spec, seed, theta = _setup(args)
    est = _gradient(args, env, spec, seed, theta)
    meta = {"norm": est.norm, "n_episodes": est.n_episodes, "stderr_norm": float(np.linalg.norm(est.stderr()))}
    if args.out:
        write_theta(args.out, est.eta, spec)
        meta["out"] = args.out
    else:
        meta["eta"] = est.eta.tolist()
    _emit(meta)


def cmd_scan(args) -> None:
    env, spec, seed, theta = _setup(args)
    if args.direction is None:
        direction = _gradient(args, env, spec, seed, theta).eta
    else:
        direction = _vector(args.direction, spec)
        if len(direction) != spec.n_params:
            raise ConfigError(f"direction needs {spec.n_params} components, got {len(direction)}")
    if spec.is_gaussian and not args.scan_sigma:
        direction = direction.copy()
        direction[spec.sigma_index] = 0.0
    cfg = _rcfg(args, seed, stochastic=args.stochastic, n_paths=args.paths)
    res = scan(env, spec, theta, direction, args.steps, args.step_size, cfg, normalize=args.normalize)
    if args.out:
        write_scan_csv(Path(args.out), res)
    _emit({"out": args.out, "tail_bound": res.tail_bound, "n_failed": int(np.isnan(res.J).sum()),
           "J_min": float(np.nanmin(res.J)), "J_max": float(np.nanmax(res.J)), **roughness(res)})


def cmd_sweep(args) -> None:
    env = make_env(args.env)
    spec = _spec(args, env)
    seed = master_seed(args.seed)
    lo, hi, n = args.grid
    res = sweep(env, spec, lo, hi, n, _rcfg(args, seed))
    if args.out:
        write_sweep_csv(Path(args.out), res)
    _emit({"out": args.out, "tail_bound": res.tail_bound, "n_failed": int(np.isnan(res.J).sum()), **roughness(res)})


def cmd_repro(args) -> None:
    overrides = {"horizon": args.horizon, "holder_samples": args.holder_samples, "n_episodes": args.n_episodes}
    if args.manifest:
        cfg = config_from_manifest(args.manifest)
        if args.figure and args.figure != cfg.figure:
            raise ConfigError(f"manifest is for {cfg.figure}, not {args.figure}")
        # thread count never changes results, so it may differ from the recorded run
        cfg = replace(cfg, threads=args.threads)
    elif args.figure:
        cfg = ReproConfig.defaults(args.figure, seed=master_seed(args.seed), threads=args.threads, **overrides)
    else:
        raise ConfigError("repro needs a figure id or --manifest")
    if cfg.threads < 1:
        raise ConfigError("--threads must be at least 1")
    manifest = run_figure(cfg, args.out or f"repro-{cfg.figure}")
    _emit({"out": str(Path(args.out or f"repro-{cfg.figure}")), **manifest})


COMMANDS = {
    "eval": cmd_eval,
    "mle": cmd_mle,
    "holder": cmd_holder,
    "grad": cmd_grad,
    "scan": cmd_scan,
    "sweep": cmd_sweep,
    "repro": cmd_repro,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except (NonFiniteState, InsufficientPoints, FloatingPointError, OverflowError) as exc:
        print(f"fractalscape: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, OSError) as exc:
        print(f"fractalscape: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return 0


def main() -> None:
    sys.exit(run())
