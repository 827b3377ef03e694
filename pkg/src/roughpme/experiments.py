"""Experiment drivers: each maps an ``ExperimentConfig`` to an ``ExperimentReport``.

Every driver is a pure function of the config (paths come from the seed or a
CSV), so reruns reproduce the report exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .characteristics import CharacteristicContext, TestBump, small_time_horizon
from .config import ExperimentConfig
from .domain import Field, build_coefficients, solve_phi, weighted_lp_norm
from .errors import NonnegativityError, ParameterError, SolverError
from .kinetic import (XiGrid, ibp_residual, snapshot, trajectory_log_moment,
                      trajectory_singular_moment, transport_residual, xi_grid_for)
from .rough_paths import SamplePath, modulus_of_continuity, sample_fbm
from .solver import (SolverConfig, chain_rule_defect, energy_report, noise_context, solve,
                     solve_transformed)

COCYCLE_FACTOR = 1.5
CAUCHY_FACTOR = 0.5


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    value: float
    threshold: float
    relation: str  # how value compares with threshold, e.g. "<=" or ">="

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "value": float(self.value),
                "threshold": float(self.threshold), "relation": self.relation}


@dataclass
class ExperimentReport:
    kind: str
    metrics: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)  # name -> {column: list}
    verdicts: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def check(self, name, value, threshold, relation):
        ok = {"<=": value <= threshold, ">=": value >= threshold, "<": value < threshold}[relation]
        ok = bool(ok) and math.isfinite(value)
        self.verdicts.append(Verdict(name, ok, float(value), float(threshold), relation))
        return ok

    def as_dict(self):
        return {"kind": self.kind, "passed": self.passed, "metrics": self.metrics,
                "verdicts": [v.as_dict() for v in self.verdicts],
                "series": sorted(self.series), "provenance": self.provenance}


# -- shared setup --------------------------------------------------------------

def solver_config(cfg: ExperimentConfig, **overrides) -> SolverConfig:
    kw = dict(m=cfg.m, eta=cfg.eta, epsilon=cfg.epsilon, dt=cfg.dt,
              newton_tol=cfg.newton_tol, newton_max_iter=cfg.newton_max_iter)
    kw.update(overrides)
    return SolverConfig(**kw)


def build_path(cfg: ExperimentConfig, n_channels: int, horizon: float, eps_min: float,
               seed: int | None = None) -> SamplePath:
    """Raw driving path covering ``[0, horizon]``; the default spacing resolves ``eps_min``."""
    if cfg.path_csv:
        path = SamplePath.from_csv(cfg.path_csv)
        if path.n_channels != n_channels:
            raise ParameterError(
                f"path CSV has {path.n_channels} channels, config has {n_channels} coefficients")
        if path.horizon < horizon * (1 - 1e-12):
            raise ParameterError(f"path CSV horizon {path.horizon} < required {horizon}")
        return path
    dt_path = cfg.path_dt or eps_min / 8.0
    n_steps = int(math.ceil(horizon / dt_path - 1e-9))
    return sample_fbm(cfg.hurst, n_channels, n_steps, dt_path,
                      cfg.seed if seed is None else seed, horizon=n_steps * dt_path)


def build_context(cfg: ExperimentConfig, grid=None, eps_min=None, horizon=None, seed=None):
    grid = grid or cfg.grid()
    coeffs = build_coefficients(grid, cfg.coefficients)
    eps_min = eps_min or cfg.epsilon
    horizon = horizon if horizon is not None else cfg.T + cfg.epsilon
    path = build_path(cfg, max(1, coeffs.n), horizon, eps_min, seed)
    return CharacteristicContext(coeffs, path)


def _provenance(cfg: ExperimentConfig, **extra):
    return {"config": cfg.echo(), "version": __version__, "seed": cfg.seed, **extra}


def _solve_job(args):
    u0, T, scfg, ctx, transformed, record_every = args
    fn = solve_transformed if transformed else solve
    return fn(u0, T, scfg, ctx, record_every)


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _l1(grid, a, b=None):
    return grid.integrate(np.abs(a if b is None else a - b))


def _interior_psi(grid) -> Field:
    """Nonnegative velocity-independent bump supported on the middle 80% of each axis."""
    ext = np.asarray(grid.extents, dtype=float)
    bump = TestBump(tuple(ext / 2), tuple(0.4 * ext), xi_width=None)
    return Field(grid, bump.x_parts(grid)[0])


# -- drivers ---------------------------------------------------------------------

def run_solve(cfg: ExperimentConfig, workers: int = 1):
    """Plain trajectory with per-step summaries; returns ``(report, trajectory)``."""
    grid = cfg.grid()
    ctx = build_context(cfg, grid)
    scfg = solver_config(cfg)
    traj = solve(cfg.initial.evaluate(grid, cfg.m), cfg.T, scfg, ctx, cfg.record_every)
    rep = ExperimentReport("solve", provenance=_provenance(cfg))
    rep.series["summary"] = {
        "t": traj.times.tolist(),
        "l1": [_l1(grid, u) for u in traj.states],
        "l2_sq": [grid.integrate(u * u) for u in traj.states],
        "min": [float(u.min()) for u in traj.states],
        "max": [float(u.max()) for u in traj.states],
    }
    rep.series["newton"] = {
        "step": list(range(1, len(traj.newton_iters) + 1)),
        "iterations": list(traj.newton_iters),
        "residual": [float(r) for r in traj.residuals],
    }
    rep.metrics.update({
        "mean_newton_iterations": float(np.mean(traj.newton_iters)) if traj.newton_iters else 0.0,
        "max_newton_iterations": int(max(traj.newton_iters, default=0)),
        "min_value": float(traj.states.min()),
        "energy": energy_report(traj).as_dict(),
    })
    return rep, traj


def run_contraction(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Weighted L1 distance of two trajectories sharing a path."""
    if cfg.initial2 is None:
        raise ParameterError("contraction needs two initial data")
    grid = cfg.grid()
    u01 = cfg.initial.evaluate(grid, cfg.m)
    u02 = cfg.initial2.evaluate(grid, cfg.m)
    for name, u0 in (("initial", u01), ("initial2", u02)):
        if np.any(u0 < 0):
            raise NonnegativityError(
                f"{name} is signed (min {u0.min():.3e}); uniqueness and contraction "
                "are only established for nonnegative L2 initial data")
    ctx = build_context(cfg, grid)
    scfg = solver_config(cfg)
    jobs = [(u0, cfg.T, scfg, ctx, True, cfg.record_every) for u0 in (u01, u02)]
    t1, t2 = _map(_solve_job, jobs, workers)
    phi = solve_phi(grid)
    # transformed states are already v_{0,t} u
    D = np.array([weighted_lp_norm(a - b, phi) for a, b in zip(t1.states, t2.states)])
    p1, p2 = t1.physical(), t2.physical()
    plain = np.array([weighted_lp_norm(a - b, phi) for a, b in zip(p1.states, p2.states)])
    t_star = small_time_horizon(noise_context(ctx, scfg), phi, cfg.T, cfg.dt)
    times = t1.times
    within = times <= t_star + 1e-12
    incr = np.diff(D)
    tol = 10.0 * cfg.newton_tol
    mask = within[1:]
    worst = float(incr[mask].max()) if mask.any() else -math.inf
    rep = ExperimentReport("contraction", provenance=_provenance(cfg))
    rep.series["distance"] = {"t": times.tolist(), "D_weighted": D.tolist(),
                              "D_plain": plain.tolist(),
                              "within_t_star": [int(w) for w in within]}
    d0 = plain[0]
    c_obs = float(plain.max() / d0) if d0 > 0 else (0.0 if plain.max() <= tol else math.inf)
    rep.metrics.update({"t_star": t_star, "max_increment_on_t_star": worst,
                        "C_obs": c_obs, "D0": float(d0), "tolerance": tol})
    rep.check("monotone_on_t_star", worst if mask.any() else 0.0, tol, "<=")
    rep.check("C_obs_finite", c_obs, math.inf, "<")
    return rep


def run_convergence(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Cauchy differences along ``eps_k = eps_0 2^-k``, ``eta_k = eta_0 2^-k``."""
    K = cfg.levels
    if K < 3:
        raise ParameterError("convergence needs levels >= 3")
    grid = cfg.grid()
    eps = [cfg.epsilon * 2.0**-k for k in range(K + 1)]
    etas = [cfg.eta * 2.0**-k for k in range(K + 1)]
    ctx = build_context(cfg, grid, eps_min=eps[-1])
    u0 = cfg.initial.evaluate(grid, cfg.m)
    jobs = [(u0, cfg.T, solver_config(cfg, epsilon=e, eta=h), ctx, False, cfg.record_every)
            for e, h in zip(eps, etas)]
    try:
        trajs = _map(_solve_job, jobs, workers)
    except SolverError as exc:
        raise SolverError(f"convergence run failed: {exc}", exc.residual, exc.step) from exc
    w = trajs[0].time_weights()
    e = [float(sum(wi * _l1(grid, a, b) for wi, a, b in zip(w, trajs[k - 1].states, trajs[k].states)))
         for k in range(1, K + 1)]
    reports = [energy_report(t) for t in trajs]
    rep = ExperimentReport("convergence", provenance=_provenance(cfg))
    rep.series["cauchy"] = {"k": list(range(1, K + 1)), "e": e}
    rep.series["runs"] = {
        "k": list(range(K + 1)), "epsilon": eps, "eta": etas,
        "sup_l2_sq": [r.sup_l2_sq for r in reports],
        "envelope": [r.initial_l2_sq * math.exp(r.growth_rate * cfg.T) for r in reports],
        "parabolic_dissipation": [r.parabolic_dissipation for r in reports],
        "viscous_dissipation": [r.viscous_dissipation for r in reports],
    }
    growth = max(e[k] - e[k - 1] for k in range(1, K))
    rep.metrics.update({"e": e, "max_increase": growth})
    rep.check("cauchy_nonincreasing", growth, 0.0, "<=")
    rep.check("cauchy_halved", e[-1], CAUCHY_FACTOR * e[0], "<=")
    env = max(r.sup_l2_sq - r.initial_l2_sq * math.exp(r.growth_rate * cfg.T) for r in reports)
    rep.check("energy_within_envelope", env, 1e-12, "<=")
    return rep


def _cocycle_job(args):
    cfg, level, seed = args
    dt = cfg.dt * 2.0**-level
    eps = cfg.epsilon * 2.0**-level
    eps_min = cfg.epsilon * 2.0**-cfg.levels
    grid = cfg.grid()
    ctx = build_context(cfg, grid, eps_min=eps_min, seed=seed)
    scfg = solver_config(cfg, dt=dt, epsilon=eps)
    u0 = cfg.initial.evaluate(grid, cfg.m)
    s, T = cfg.split, cfg.T
    A = solve(u0, T, scfg, ctx, record_every=int(round(T / dt)))
    first = solve(u0, s, scfg, ctx, record_every=int(round(s / dt)))
    shifted = CharacteristicContext(ctx.coefficients, ctx.path.shifted(s))
    B = solve(first.states[-1], T - s, scfg, shifted, record_every=int(round((T - s) / dt)))
    mismatch = _l1(grid, A.states[-1], B.states[-1])
    omega = modulus_of_continuity(ctx.path, eps, min(ctx.path.horizon, T + cfg.epsilon))
    return mismatch, omega


def _check_split(cfg: ExperimentConfig):
    s = cfg.split
    if s is None or not 0 < s < cfg.T:
        raise ParameterError(f"split must lie in (0, T), got {s}")
    for level in range(cfg.levels + 1):
        dt = cfg.dt * 2.0**-level
        if abs(s / dt - round(s / dt)) > 1e-9 * max(1.0, s / dt):
            raise ParameterError(f"split {s} is not on the step grid dt={dt}")


def run_cocycle(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Restart mismatch ``M = ||A(T) - B(T - s)||_L1`` over ``levels`` (dt, eps) halvings.

    With ``cfg.ensemble > 1`` the verdict uses the mean over seeds
    ``seed, ..., seed + ensemble - 1``; per-seed values are kept in the series.
    """
    _check_split(cfg)
    L = cfg.levels
    ensemble = cfg.ensemble
    seeds = [cfg.seed + j for j in range(ensemble)]
    jobs = [(cfg, lev, sd) for sd in seeds for lev in range(L + 1)]
    out = np.array(_map(_cocycle_job, jobs, workers)).reshape(ensemble, L + 1, 2)
    M = out[:, :, 0]
    mean = M.mean(axis=0)
    rep = ExperimentReport("cocycle", provenance=_provenance(cfg, seeds=seeds))
    series = {"level": list(range(L + 1)),
              "dt": [cfg.dt * 2.0**-l for l in range(L + 1)],
              "epsilon": [cfg.epsilon * 2.0**-l for l in range(L + 1)],
              "M_mean": mean.tolist(),
              "omega_eps": out[0, :, 1].tolist()}
    if ensemble > 1:
        for j, sd in enumerate(seeds):
            series[f"M_seed{sd}"] = M[j].tolist()
    rep.series["mismatch"] = series
    noiseless = build_coefficients(cfg.grid(), cfg.coefficients).is_zero() or not cfg.coefficients
    rep.metrics.update({"M": mean.tolist(), "noiseless": bool(noiseless), "ensemble": ensemble})
    if noiseless:
        rep.check("restart_exact", float(M.max()), cfg.newton_tol, "<=")
    else:
        ratios = mean[:-1] / np.where(mean[1:] > 0, mean[1:], np.nan)
        rep.metrics["ratios"] = ratios.tolist()
        worst = float(np.nanmin(ratios)) if np.isfinite(ratios).any() else math.nan
        rep.check("mismatch_ratio", worst, COCYCLE_FACTOR, ">=")
    return rep


def run_positivity(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    grid = cfg.grid()
    u0 = cfg.initial.evaluate(grid, cfg.m)
    if np.any(u0 < 0):
        raise NonnegativityError(f"positivity needs nonnegative initial data (min {u0.min():.3e})")
    ctx = build_context(cfg, grid)
    traj = solve(u0, cfg.T, solver_config(cfg), ctx, cfg.record_every)
    phi = solve_phi(grid)
    norms = np.array([weighted_lp_norm(u, phi) for u in traj.states])
    n0 = norms[0]
    c_obs = float(norms.max() / n0) if n0 > 0 else 0.0
    step_min = min(traj.min_values, default=0.0)
    low = float(min(traj.states.min(), step_min))
    rep = ExperimentReport("positivity", provenance=_provenance(cfg))
    rep.series["envelope"] = {"t": traj.times.tolist(), "phi_l1": norms.tolist(),
                              "min": [float(u.min()) for u in traj.states]}
    rep.metrics.update({"min_value": low, "C_obs": c_obs})
    rep.check("nonnegative", low, -10.0 * cfg.newton_tol, ">=")
    return rep


def run_diagnose(cfg: ExperimentConfig, workers: int = 1, snapshot_path=None) -> ExperimentReport:
    """Energy, chain-rule, singular-moment and weak-form diagnostics of one trajectory."""
    grid = cfg.grid()
    ctx = build_context(cfg, grid)
    scfg = solver_config(cfg)
    u0 = cfg.initial.evaluate(grid, cfg.m)
    traj = solve(u0, cfg.T, scfg, ctx, cfg.record_every)
    xi_grid = xi_grid_for(traj, cfg.n_xi)
    delta = cfg.delta if cfg.delta is not None else min(cfg.m, 1.0)
    rep = ExperimentReport("diagnose", provenance=_provenance(cfg))
    energy = energy_report(traj)
    chain = [chain_rule_defect(grid, u, cfg.m, scfg.power_floor) for u in traj.states]
    rep.series["chain_rule"] = {"t": traj.times.tolist(), "defect": chain}
    metrics = {"n_xi": xi_grid.n_xi, "dxi": xi_grid.dxi, "delta": delta,
               "energy": energy.as_dict(),
               "singular_moment": trajectory_singular_moment(traj, delta, xi_grid),
               "total_defect": trajectory_singular_moment(traj, 1.0, xi_grid)}
    if np.all(u0 >= 0):
        metrics["log_moment"] = trajectory_log_moment(traj, _interior_psi(grid), xi_grid)
    ext = np.asarray(grid.extents, dtype=float)
    umax = float(np.abs(u0).max()) or 1.0
    rho0 = TestBump(tuple(0.45 * ext), tuple(0.3 * ext), 0.5 * umax, 0.5 * umax)
    metrics["transport_residual"] = transport_residual(traj, rho0, 0.0, float(traj.times[-1]), xi_grid)
    psi = TestBump(tuple(0.4 * ext), tuple(0.25 * ext), 0.5 * umax, 0.5 * umax)
    metrics["ibp_residual"] = ibp_residual(traj, psi, xi_grid)
    rep.metrics.update(metrics)
    for key in ("singular_moment", "total_defect", "transport_residual", "ibp_residual"):
        rep.check(f"{key}_finite", metrics[key], math.inf, "<")
    if snapshot_path is not None:
        snapshot(traj.field(len(traj) - 1), cfg.m, cfg.eta, xi_grid).to_csv(snapshot_path)
    return rep


RUNNERS = {
    "contraction": run_contraction,
    "convergence": run_convergence,
    "cocycle": run_cocycle,
    "positivity": run_positivity,
    "diagnose": run_diagnose,
}
