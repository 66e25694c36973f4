"""End-to-end pipelines that regenerate the landscape figure data.

``fig2``: logistic closed loop, MLE sweep and objective sweeps for several
discount factors. ``fig3``/``fig4``: pendulum/acrobot, draw ``theta0``,
estimate the policy gradient, scan the objective along it, and fit the
variance-scaling Hölder slope.
"""

from __future__ import annotations

import copy
import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .envs import make_env
from .holder import HolderConfig, HolderFit, fit_holder, variance_pairs
from .landscape import ScanResult, SweepResult, guard_fractal, roughness, scan, sweep
from .lyapunov import MleConfig, mle_sweep
from .policies import PolicySpec, init_theta
from .policygrad import GradConfig, estimate_gradient
from .rng import master_seed, substream
from .rollout import RolloutConfig, objective_batch, tail_bound

FIGURES = ("fig2", "fig3", "fig4")


def holder_fit_objective(env, spec: PolicySpec, theta0, rcfg: RolloutConfig, hcfg: HolderConfig) -> tuple[HolderFit, np.ndarray]:
    """Variance-scaling fit of the deterministic objective around ``theta0``.

    The log-sigma coordinate is held fixed unless ``hcfg.scan_sigma``.
    """
    mask = np.ones(spec.n_params, bool)
    if spec.sigma_index is not None and not hcfg.scan_sigma:
        mask[spec.sigma_index] = False
    det = RolloutConfig(gamma=rcfg.gamma, horizon=rcfg.horizon, s0=rcfg.s0, seed=rcfg.seed, threads=rcfg.threads)
    sig, var, values = variance_pairs(lambda th: objective_batch(env, spec, th, det), theta0, hcfg, mask)
    fit = fit_holder(sig, var, values, seed=hcfg.seed)
    return guard_fractal(fit, values, tail_bound(env, det.gamma, det.horizon)), values


@dataclass
class ReproConfig:
    """Everything needed to rerun a figure pipeline bit for bit."""

    figure: str
    seed: int = field(default_factory=master_seed)
    horizon: int = 1000
    threads: int = 1
    gammas: list = field(default_factory=list)
    stochastic_gammas: list = field(default_factory=list)
    holder_gammas: list = field(default_factory=list)
    hidden: int = 8
    sigma0: float = 0.1
    theta_scale: float = 0.05
    n_episodes: int = 256
    scan_steps: int = 200
    step_size: float = 1e-7
    normalize: bool = False
    holder_samples: int = 200
    holder_sigma_grid: list = field(default_factory=lambda: [float(s) for s in np.logspace(-5, -2, 12)])
    sweep_lo: float = 3.3
    sweep_hi: float = 3.9
    sweep_points: int = 2000
    mle_points: int = 601

    @classmethod
    def defaults(cls, figure: str, **overrides) -> ReproConfig:
        if figure not in FIGURES:
            raise ValueError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
        per_figure = {
            "fig2": dict(gammas=[0.5, 0.9, 0.99]),
            "fig3": dict(gammas=[0.9, 0.99], stochastic_gammas=[0.9, 0.99], holder_gammas=[0.9]),
            "fig4": dict(gammas=[0.8, 0.9, 0.99], stochastic_gammas=[0.99], holder_gammas=[0.8, 0.9, 0.99]),
        }[figure]
        per_figure.update({k: v for k, v in overrides.items() if v is not None})
        return cls(figure=figure, **per_figure)


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_scan_csv(path: Path, res: ScanResult):
    _write_csv(path, ["delta", "J", "tail_bound"], [(d, j, res.tail_bound) for d, j in zip(res.deltas, res.J)])


def write_sweep_csv(path: Path, res: SweepResult):
    _write_csv(path, ["theta", "J", "tail_bound"], [(t, j, res.tail_bound) for t, j in zip(res.theta_grid, res.J)])


def _gtag(g: float) -> str:
    return f"{g:g}".replace(".", "p")


def run_fig2(cfg: ReproConfig, out: Path) -> dict:
    env = make_env("logistic")
    spec = PolicySpec("linear")
    summary = {"sweeps": {}}
    grid = np.linspace(cfg.sweep_lo, cfg.sweep_hi, cfg.mle_points)
    mles = mle_sweep(env, spec, grid, cfg=MleConfig(seed=cfg.seed))
    _write_csv(out / "mle.csv", ["theta", "lambda"], [(t, "" if lam is None else lam) for t, lam, _ in mles])
    lam = np.array([np.nan if x is None else x for _, x, _ in mles])
    summary["mle_positive_fraction"] = float(np.mean(lam > 0))
    for g in cfg.gammas:
        rc = RolloutConfig(gamma=g, horizon=cfg.horizon, seed=cfg.seed, threads=cfg.threads)
        res = sweep(env, spec, cfg.sweep_lo, cfg.sweep_hi, cfg.sweep_points, rc)
        write_sweep_csv(out / f"sweep_gamma{_gtag(g)}.csv", res)
        summary["sweeps"][str(g)] = roughness(res)
    return summary


def run_control(cfg: ReproConfig, out: Path) -> dict:
    env = make_env({"fig3": "pendulum", "fig4": "acrobot"}[cfg.figure])
    spec = PolicySpec("tanh-net-gaussian", n=env.state_dim, m=env.action_dim, r=cfg.hidden)
    theta0 = init_theta(spec, substream(cfg.seed, "theta0"), scale=cfg.theta_scale, sigma0=cfg.sigma0)
    _write_csv(out / "theta0.csv", [f"p{i}" for i in range(spec.n_params)], [theta0])
    summary = {"env": env.name, "n_params": spec.n_params, "scans": {}, "holder": {}}
    for g in sorted(set(cfg.gammas) | set(cfg.stochastic_gammas)):
        grad = estimate_gradient(
            env, spec, theta0,
            GradConfig(n_episodes=cfg.n_episodes, gamma=g, horizon=cfg.horizon, seed=cfg.seed, threads=cfg.threads),
        )
        _write_csv(out / f"eta_gamma{_gtag(g)}.csv", [f"p{i}" for i in range(spec.n_params)], [grad.eta])
        modes = ([False] if g in cfg.gammas else []) + ([True] if g in cfg.stochastic_gammas else [])
        for stochastic in modes:
            rc = RolloutConfig(gamma=g, horizon=cfg.horizon, seed=cfg.seed, threads=cfg.threads,
                               stochastic=stochastic, n_paths=1)
            res = scan(env, spec, theta0, grad.eta, cfg.scan_steps, cfg.step_size, rc, normalize=cfg.normalize)
            tag = f"gamma{_gtag(g)}_{'stochastic' if stochastic else 'deterministic'}"
            write_scan_csv(out / f"scan_{tag}.csv", res)
            summary["scans"][tag] = {"eta_norm": grad.norm, **roughness(res)}
    hcfg = HolderConfig(sigma_grid=tuple(cfg.holder_sigma_grid), n_samples=cfg.holder_samples, seed=cfg.seed)
    for g in cfg.holder_gammas:
        rc = RolloutConfig(gamma=g, horizon=cfg.horizon, seed=cfg.seed, threads=cfg.threads)
        fit, _ = holder_fit_objective(env, spec, theta0, rc, hcfg)
        _write_csv(out / f"holder_gamma{_gtag(g)}.csv", ["sigma", "variance"], zip(fit.sigmas, fit.variances))
        summary["holder"][str(g)] = fit.as_dict()
    return summary


def run_figure(cfg: ReproConfig, out_dir) -> dict:
    """Run one pipeline, write CSVs plus ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary = run_fig2(cfg, out) if cfg.figure == "fig2" else run_control(cfg, out)
    manifest = {
        "artifact_version": __version__,
        "config": asdict(cfg),
        "master_seed": cfg.seed,
        "wall_clock_s": time.perf_counter() - t0,
        "outputs": sorted(p.name for p in out.glob("*.csv")),
        "summary": summary,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def config_from_manifest(path) -> ReproConfig:
    data = json.loads(Path(path).read_text())
    return ReproConfig(**copy.deepcopy(data["config"]))
