"""Implicit monotone finite-difference solver for the regularized equation

    du/dt = Lap(u^[m]) + eta Lap(u) + sum_k f_k(x) u dz^{k,eps}/dt,   u = 0 on the boundary,

and for its weighted form ``w = v_{0,t} u`` which evolves without the noise term:

    dw/dt = v Lap(w^[m] v^-m) + eta v Lap(w / v).

Both are advanced by fully implicit Euler with damped Newton on interior nodes.
For ``m < 1`` Newton iterates on ``g = u^[m]`` instead of ``u``; the inverse
map ``g -> g^[1/m]`` is C^1, so the Jacobian stays bounded at ``u = 0``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .characteristics import CharacteristicContext, weight_field
from .domain import Field, Grid
from .errors import ParameterError, SolverError, StabilityError
from .rough_paths import MollifiedPath, SamplePath, mollify

log = logging.getLogger(__name__)


def signed_power(u, m: float):
    """``|u|^(m-1) u``, continuous at 0 for every ``m > 0``."""
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.abs(u) ** m


@dataclass(frozen=True)
class SolverConfig:
    m: float
    eta: float = 0.0
    epsilon: float = 0.05
    dt: float = 1e-3
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    power_floor: float | None = None

    def __post_init__(self):
        if not self.m > 0:
            raise ParameterError(f"m must be positive, got {self.m}")
        if self.eta < 0:
            raise ParameterError(f"eta must be nonnegative, got {self.eta}")
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if not self.newton_tol > 0:
            raise ParameterError("newton_tol must be positive")
        if self.newton_max_iter < 1:
            raise ParameterError("newton_max_iter must be >= 1")
        floor = self.power_floor
        if floor is None:
            floor = 1e-8 if self.m < 1 else 0.0
            object.__setattr__(self, "power_floor", floor)
        if floor < 0 or (self.m < 1 and not floor > 0):
            raise ParameterError("power_floor must be > 0 for m < 1 and >= 0 otherwise")


def noise_context(ctx: CharacteristicContext, config: SolverConfig) -> CharacteristicContext:
    """Context whose path is mollified at ``config.epsilon`` (raw paths are wrapped)."""
    if isinstance(ctx.path, SamplePath):
        return CharacteristicContext(ctx.coefficients, mollify(ctx.path, config.epsilon))
    return ctx


@dataclass
class Trajectory:
    config: SolverConfig
    ctx: CharacteristicContext
    times: np.ndarray
    states: np.ndarray
    newton_iters: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    min_values: list = field(default_factory=list)
    reaction_sup: float = 0.0
    transformed: bool = False
    weights: np.ndarray | None = None
    record_every: int = 1

    @property
    def grid(self) -> Grid:
        return self.ctx.grid

    @property
    def dt_record(self) -> float:
        return self.config.dt * self.record_every

    def __len__(self):
        return len(self.times)

    def field(self, i: int) -> Field:
        return Field(self.grid, self.states[i])

    def time_weights(self) -> np.ndarray:
        """Right-endpoint weights matching implicit Euler: 0 at ``t_0``, ``dt_record`` after."""
        w = np.full(len(self.times), self.dt_record)
        w[0] = 0.0
        return w

    def physical(self) -> "Trajectory":
        """The ``u`` trajectory (divides out ``v_{0,t}`` for weighted runs)."""
        if not self.transformed:
            return self
        return replace(self, states=self.states / self.weights, transformed=False, weights=None)


class _Stepper:
    """Precomputed operators for one (config, context, scheme) triple."""

    def __init__(self, config: SolverConfig, ctx: CharacteristicContext, transformed: bool):
        self.config = config
        self.ctx = noise_context(ctx, config)
        self.grid = self.ctx.grid
        self.transformed = transformed
        self.L = self.grid.laplacian_matrix
        self.noisy = self.ctx.coefficients.n > 0 and not self.ctx.coefficients.is_zero()
        self.fvals = self.ctx.coefficients.values[:, self.grid.interior] if self.noisy else None

    # reaction coefficient sum_k f_k dz^{k,eps} at the step midpoint
    def reaction(self, t_mid: float) -> np.ndarray:
        if not self.noisy:
            return np.zeros(self.L.shape[0])
        dz = self.ctx.path.evaluate(t_mid)[1]
        return dz @ self.fvals

    def weight(self, t: float) -> np.ndarray:
        if not self.noisy:
            return np.ones(self.L.shape[0])
        return weight_field(self.ctx, 0.0, t)[self.grid.interior]

    def _maps(self, x, v):
        """``W(x), W'(x), Y(x), Y'(x)`` for the current scheme."""
        m, eta = self.config.m, self.config.eta
        floor = self.config.power_floor
        if m >= 1:
            W, dW = x, np.ones_like(x)
            if self.transformed:
                Y = v**-m * signed_power(x, m) + eta * x / v
                dY = v**-m * m * (np.abs(x) + floor) ** (m - 1) + eta / v
            else:
                Y = signed_power(x, m) + eta * x
                dY = m * (np.abs(x) + floor) ** (m - 1) + eta
        else:
            p = 1.0 / m
            core = signed_power(x, p)
            dcore = p * np.abs(x) ** (p - 1)
            if self.transformed:
                W, dW = v * core, v * dcore
            else:
                W, dW = core, dcore
            Y = x + eta * core
            dY = 1.0 + eta * dcore
        return W, dW, Y, dY

    def _solve_linear(self, diag, r, dY, rhs):
        dt, h2 = self.config.dt, self.grid.h**2
        if self.grid.d == 1:
            n = len(rhs)
            ab = np.zeros((3, n))
            ab[1] = diag + 2.0 * dt * r * dY / h2
            ab[0, 1:] = -dt * r[:-1] * dY[1:] / h2
            ab[2, :-1] = -dt * r[1:] * dY[:-1] / h2
            return scipy.linalg.solve_banded((1, 1), ab, rhs, check_finite=False)
        J = sp.diags(diag) - dt * (sp.diags(r) @ self.L @ sp.diags(dY))
        return spla.spsolve(sp.csc_matrix(J), rhs)

    def advance(self, prev: np.ndarray, t_next: float, a: np.ndarray, v: np.ndarray):
        """One implicit step on interior values; returns ``(w, iterations, residual)``."""
        cfg = self.config
        dt, m = cfg.dt, cfg.m
        r = v if self.transformed else np.ones_like(prev)

        if m >= 1:
            x = prev.copy()
        elif self.transformed:
            x = signed_power(prev / v, m)
        else:
            x = signed_power(prev, m)

        def residual(x):
            W, dW, Y, dY = self._maps(x, v)
            F = W - prev - dt * (r * (self.L @ Y) + a * W)
            return F, W, dW, dY

        F, W, dW, dY = residual(x)
        res = float(np.abs(F).max()) if F.size else 0.0
        it = 0
        while res > cfg.newton_tol:
            if it >= cfg.newton_max_iter:
                raise SolverError(
                    f"Newton did not converge in {cfg.newton_max_iter} iterations "
                    f"(residual {res:.3e})", residual=res)
            diag = dW * (1.0 - dt * a)
            delta = self._solve_linear(diag, r, dY, -F)
            lam = 1.0
            while True:
                x_new = x + lam * delta
                F_new, W_new, dW_new, dY_new = residual(x_new)
                res_new = float(np.abs(F_new).max())
                if res_new < res or lam < 2.0**-30:
                    break
                lam *= 0.5
            x, F, W, dW, dY, res = x_new, F_new, W_new, dW_new, dY_new, res_new
            it += 1
        return W, it, res


def _check_initial(u0, grid: Grid) -> np.ndarray:
    vals = u0.values if isinstance(u0, Field) else np.asarray(u0, dtype=float)
    if vals.shape != grid.shape:
        raise ParameterError(f"initial data shape {vals.shape} does not match grid {grid.shape}")
    scale = max(1.0, float(np.abs(vals).max())) if vals.size else 1.0
    if np.any(np.abs(vals[grid.boundary]) > 1e-12 * scale):
        raise ParameterError("initial data must vanish on boundary nodes")
    vals = vals.copy()
    vals[grid.boundary] = 0.0
    return vals


def _n_steps(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if T < 0 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ParameterError(f"T={T} is not a multiple of dt={dt}")
    return n


def _stability_check(stepper: _Stepper, a: np.ndarray, step: int) -> None:
    if a.size and stepper.config.dt * a.max() >= 1.0:
        raise StabilityError(
            f"implicit reaction diagonal 1 - dt*a = {1 - stepper.config.dt * a.max():.3e} <= 0 "
            f"at step {step}; reduce dt below {1.0 / a.max():.3e}", step=step)


def step(u_n, t_n: float, config: SolverConfig, ctx: CharacteristicContext) -> Field:
    """Advance ``u`` from ``t_n`` to ``t_n + dt``."""
    stepper = _Stepper(config, ctx, transformed=False)
    grid = stepper.grid
    prev = grid.restrict(_check_initial(u_n, grid))
    a = stepper.reaction(t_n + 0.5 * config.dt)
    _stability_check(stepper, a, 0)
    w, _, _ = stepper.advance(prev, t_n + config.dt, a, np.ones_like(prev))
    return Field(grid, grid.extend(w))


def _run(u0, T, config, ctx, transformed, record_every):
    stepper = _Stepper(config, ctx, transformed)
    grid = stepper.grid
    vals = _check_initial(u0, grid)
    n_steps = _n_steps(T, config.dt)
    if record_every < 1:
        raise ParameterError("record_every must be >= 1")
    dt = config.dt
    cur = grid.restrict(vals).astype(float)
    times, states, weights = [0.0], [vals.copy()], [np.ones(grid.shape)]
    traj = Trajectory(config, stepper.ctx, None, None, transformed=transformed,
                      record_every=record_every)
    ones = np.ones_like(cur)
    for n in range(n_steps):
        t_next = (n + 1) * dt
        if transformed:
            a = np.zeros_like(cur)
            v = stepper.weight(t_next)
        else:
            a = stepper.reaction(n * dt + 0.5 * dt)
            _stability_check(stepper, a, n)
            v = ones
            if a.size:
                traj.reaction_sup = max(traj.reaction_sup, float(np.abs(a).max()))
        try:
            cur, its, res = stepper.advance(cur, t_next, a, v)
        except SolverError as exc:
            exc.step = n
            raise SolverError(f"step {n}: {exc}", residual=exc.residual, step=n) from exc
        traj.newton_iters.append(its)
        traj.residuals.append(res)
        traj.min_values.append(float(cur.min()) if cur.size else 0.0)
        if (n + 1) % record_every == 0:
            times.append(t_next)
            states.append(grid.extend(cur))
            if transformed:
                weights.append(weight_field(stepper.ctx, 0.0, t_next) if stepper.noisy
                               else np.ones(grid.shape))
    traj.times = np.array(times)
    traj.states = np.array(states)
    traj.weights = np.array(weights) if transformed else None
    return traj


def solve(u0, T: float, config: SolverConfig, ctx: CharacteristicContext,
          record_every: int = 1) -> Trajectory:
    """Implicit Euler trajectory of the regularized equation on ``[0, T]``."""
    return _run(u0, T, config, ctx, False, record_every)


def solve_transformed(u0, T: float, config: SolverConfig, ctx: CharacteristicContext,
                      record_every: int = 1) -> Trajectory:
    """Implicit Euler trajectory of ``w = v_{0,t} u``; ``traj.physical()`` recovers ``u``."""
    return _run(u0, T, config, ctx, True, record_every)


# -- diagnostics --------------------------------------------------------------

@dataclass(frozen=True)
class EnergyReport:
    sup_l2_sq: float
    initial_l2_sq: float
    parabolic_dissipation: float   # sum dt ||grad_h u^[(m+1)/2]||^2
    viscous_dissipation: float     # eta * sum dt ||grad_h u||^2
    identity_residual: float | None
    growth_rate: float             # c in sup ||u||^2 <= exp(cT) ||u0||^2

    def as_dict(self):
        return dict(self.__dict__)


def grad_sq_norm(grid: Grid, values) -> float:
    g = grid.gradient(values)
    return grid.integrate(np.sum(g * g, axis=0))


def energy_report(traj: Trajectory) -> EnergyReport:
    if len(traj) == 0:
        raise ParameterError("empty trajectory")
    traj = traj.physical()
    grid, cfg = traj.grid, traj.config
    m = cfg.m
    weights = traj.time_weights()
    l2 = np.array([grid.integrate(u * u) for u in traj.states])
    par = np.array([grad_sq_norm(grid, signed_power(u, 0.5 * (m + 1))) for u in traj.states])
    visc = np.array([grad_sq_norm(grid, u) for u in traj.states]) if cfg.eta > 0 else np.zeros(len(l2))
    residual = None
    if traj.ctx.coefficients.is_zero() and cfg.eta == 0 and traj.record_every == 1:
        coef = 8.0 * m / (m + 1) ** 2
        residual = float(np.sum(np.abs(l2[1:] - l2[:-1] + cfg.dt * coef * par[1:])))
    a = traj.reaction_sup
    growth = 2.0 * a
    if a > 0 and cfg.dt * a < 1:
        growth = max(growth, -2.0 * math.log(1.0 - cfg.dt * a) / cfg.dt)
    return EnergyReport(
        sup_l2_sq=float(l2.max()),
        initial_l2_sq=float(l2[0]),
        parabolic_dissipation=float(np.dot(weights, par)),
        viscous_dissipation=float(cfg.eta * np.dot(weights, visc)),
        identity_residual=residual,
        growth_rate=growth,
    )


def chain_rule_defect(grid: Grid, u, m: float, power_floor: float = 0.0) -> float:
    """L1 norm of ``grad u^[m] - 2m/(m+1) |u|^((m-1)/2) grad u^[(m+1)/2]`` on the grid.

    The floor is added to ``|u|`` in the singular factor when ``m < 1``.
    """
    u = np.asarray(u, dtype=float)
    lhs = grid.gradient(signed_power(u, m))
    absu = np.abs(u) + (power_floor if m < 1 else 0.0)
    with np.errstate(divide="ignore"):
        factor = np.where(absu > 0, absu ** (0.5 * (m - 1)), 0.0)
    rhs = 2.0 * m / (m + 1) * factor * grid.gradient(signed_power(u, 0.5 * (m + 1)))
    return grid.integrate(np.sqrt(np.sum((lhs - rhs) ** 2, axis=0)))
