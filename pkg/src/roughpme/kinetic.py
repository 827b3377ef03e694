"""Kinetic function, defect-measure deposits, singular moments and weak-form residuals.

Velocities live on an offset lattice: ``n_xi`` (even) bins of width ``dxi``
covering ``[-xi_max, xi_max]``, so no bin is centred at ``xi = 0``.  Dirac
masses at ``xi = u(x)`` are deposited into the bin containing ``u(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .characteristics import TestBump, TransportedTestFunction
from .domain import Field, Grid
from .errors import NonnegativityError, ParameterError
from .solver import Trajectory, signed_power

DEFAULT_N_XI = 256


@dataclass(frozen=True)
class XiGrid:
    xi_max: float
    n_xi: int = DEFAULT_N_XI

    def __post_init__(self):
        if not self.xi_max > 0:
            raise ParameterError(f"xi_max must be positive, got {self.xi_max}")
        if self.n_xi < 2 or self.n_xi % 2:
            raise ParameterError(f"n_xi must be even and >= 2, got {self.n_xi}")

    @property
    def dxi(self) -> float:
        return 2.0 * self.xi_max / self.n_xi

    @property
    def centers(self) -> np.ndarray:
        return -self.xi_max + (np.arange(self.n_xi) + 0.5) * self.dxi

    def bin_index(self, u) -> np.ndarray:
        idx = np.floor((np.asarray(u) + self.xi_max) / self.dxi).astype(int)
        return np.clip(idx, 0, self.n_xi - 1)

    def check_range(self, u) -> None:
        umax = float(np.abs(u).max()) if np.size(u) else 0.0
        if umax > self.xi_max:
            raise ParameterError(f"xi range {self.xi_max} does not cover max|u| = {umax}")


def xi_grid_for(traj: Trajectory, n_xi: int = DEFAULT_N_XI) -> XiGrid:
    """Lattice with ``xi_max = 1.5 sup_n max|u_n|`` for a run."""
    umax = float(np.abs(traj.physical().states).max())
    return XiGrid(1.5 * umax if umax > 0 else 1.0, n_xi)


def chi_bar(s, xi):
    """``1{0 < xi < s} - 1{s < xi < 0}``."""
    s = np.asarray(s, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return ((0 < xi) & (xi < s)).astype(float) - ((s < xi) & (xi < 0)).astype(float)


def kinetic_function(u, xi_grid: XiGrid) -> np.ndarray:
    """``chi(x, xi)`` at bin centres; shape ``grid.shape + (n_xi,)``."""
    vals = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
    xi_grid.check_range(vals)
    return chi_bar(vals[..., None], xi_grid.centers)


def cell_average(u, xi_grid: XiGrid) -> np.ndarray:
    """Bin averages of ``chi``: exact overlap of each bin with ``(0, u)``, signed.

    Used by the weak-form residuals; the sum over bins times ``dxi`` is ``u``
    exactly, so the velocity quadrature error is second order.
    """
    vals = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
    xi_grid.check_range(vals)
    edges = -xi_grid.xi_max + np.arange(xi_grid.n_xi + 1) * xi_grid.dxi
    lo = np.minimum(vals, 0.0)[..., None]
    hi = np.maximum(vals, 0.0)[..., None]
    overlap = np.clip(np.minimum(hi, edges[1:]) - np.maximum(lo, edges[:-1]), 0.0, None)
    return np.sign(vals)[..., None] * overlap / xi_grid.dxi


def _deposit(vals, mass, xi_grid: XiGrid) -> np.ndarray:
    out = np.zeros(vals.shape + (xi_grid.n_xi,))
    idx = xi_grid.bin_index(vals)
    np.put_along_axis(out, idx[..., None], (mass / xi_grid.dxi)[..., None], axis=-1)
    return out


def defect_measures(u, m: float, eta: float, xi_grid: XiGrid, grid: Grid | None = None):
    """Entropy (``p``) and parabolic (``q``) defect densities per unit ``(x, xi)`` volume."""
    if isinstance(u, Field):
        grid, vals = u.grid, u.values
    else:
        vals = np.asarray(u, dtype=float)
        if grid is None:
            raise ParameterError("a grid is required for raw arrays")
    xi_grid.check_range(vals)
    if eta > 0:
        g = grid.gradient(vals)
        p_mass = eta * np.sum(g * g, axis=0)
    else:
        p_mass = np.zeros(vals.shape)
    g = grid.gradient(signed_power(vals, 0.5 * (m + 1)))
    q_mass = 4.0 * m / (m + 1) ** 2 * np.sum(g * g, axis=0)
    return _deposit(vals, p_mass, xi_grid), _deposit(vals, q_mass, xi_grid)


@dataclass(frozen=True)
class KineticSnapshot:
    grid: Grid
    xi_grid: XiGrid
    chi: np.ndarray
    p: np.ndarray
    q: np.ndarray

    def to_csv(self, path) -> None:
        g = self.grid
        n_xi = self.xi_grid.n_xi
        cols = [np.repeat(g.coords[a].ravel(), n_xi) for a in range(g.d)]
        xi = np.tile(self.xi_grid.centers, g.size)
        data = np.column_stack(cols + [xi, self.chi.ravel(), self.p.ravel(), self.q.ravel()])
        names = ["x", "y"][: g.d] + ["xi", "chi", "p", "q"]
        np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


def snapshot(u: Field, m: float, eta: float, xi_grid: XiGrid) -> KineticSnapshot:
    p, q = defect_measures(u, m, eta, xi_grid)
    return KineticSnapshot(u.grid, xi_grid, kinetic_function(u, xi_grid), p, q)


def _xsum(grid: Grid, arr) -> float:
    """``int int arr dx dxi`` over the last (velocity) axis already weighted by ``dxi``."""
    return float(np.sum(grid.quad_weights[..., None] * arr))


def singular_moment(snap: KineticSnapshot, delta: float) -> float:
    """``int int |xi|^(delta-1) (p + q)`` at one time."""
    if not 0 < delta <= 1:
        raise ParameterError(f"delta must lie in (0, 1], got {delta}")
    w = np.abs(snap.xi_grid.centers) ** (delta - 1.0)
    return _xsum(snap.grid, (snap.p + snap.q) * w) * snap.xi_grid.dxi


def log_moment(snap: KineticSnapshot, psi) -> float:
    """``int int |xi|^-1 (p + q) psi(x)``."""
    psi = psi.values if isinstance(psi, Field) else np.asarray(psi, dtype=float)
    if np.any(psi < 0):
        raise ParameterError("psi must be nonnegative")
    if np.any(psi[snap.grid.boundary] != 0):
        raise ParameterError("psi must vanish near the boundary")
    w = 1.0 / np.abs(snap.xi_grid.centers)
    return _xsum(snap.grid, (snap.p + snap.q) * w * psi[..., None]) * snap.xi_grid.dxi


def _snapshots(traj: Trajectory, xi_grid: XiGrid):
    phys = traj.physical()
    cfg = phys.config
    for u in phys.states:
        yield snapshot(Field(phys.grid, u), cfg.m, cfg.eta, xi_grid)


def trajectory_singular_moment(traj: Trajectory, delta: float, xi_grid: XiGrid | None = None) -> float:
    """``int_0^T int int |xi|^(delta-1) (p + q)`` with the trajectory's time weights."""
    xi_grid = xi_grid or xi_grid_for(traj)
    w = traj.time_weights()
    return float(sum(wi * singular_moment(s, delta) for wi, s in zip(w, _snapshots(traj, xi_grid)) if wi))


def trajectory_log_moment(traj: Trajectory, psi, xi_grid: XiGrid | None = None) -> float:
    """``int_0^T int int |xi|^-1 (p + q) psi``; nonnegative data only."""
    u0 = traj.physical().states[0]
    if np.any(u0 < 0):
        raise NonnegativityError(
            "the log moment bound needs nonnegative initial data; "
            f"min u0 = {u0.min():.3e}")
    xi_grid = xi_grid or xi_grid_for(traj)
    w = traj.time_weights()
    return float(sum(wi * log_moment(s, psi) for wi, s in zip(w, _snapshots(traj, xi_grid)) if wi))


def _time_index(traj: Trajectory, t: float) -> int:
    idx = int(np.argmin(np.abs(traj.times - t)))
    if abs(traj.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
        raise ParameterError(f"time {t} is not on the trajectory grid")
    return idx


def transport_residual(traj: Trajectory, rho0: TestBump, s: float, t: float,
                       xi_grid: XiGrid | None = None) -> float:
    """Absolute residual of the transported kinetic weak form between ``s`` and ``t``.

    ``[int chi rho_{s,r}]_{r=s}^{t} - int_s^t int (m|xi|^(m-1) + eta) chi Lap rho_{s,r}
    + int_s^t int (p + q) d_xi rho_{s,r}``, using the trajectory's noise context.
    Time integrals use the right-endpoint rule of the implicit scheme; the
    ``chi`` integrals use bin averages (see ``cell_average``).
    """
    rho0.check_support(traj.grid)
    phys = traj.physical()
    grid, cfg, ctx = phys.grid, phys.config, phys.ctx
    xi_grid = xi_grid or xi_grid_for(phys)
    i0, i1 = _time_index(phys, s), _time_index(phys, t)
    if i1 < i0:
        raise ParameterError("transport_residual needs s <= t")
    xi = xi_grid.centers
    dxi = xi_grid.dxi
    diff_coef = cfg.m * np.abs(xi) ** (cfg.m - 1.0) + cfg.eta

    def pairing(i):
        rho = TransportedTestFunction(ctx, rho0, s, phys.times[i])
        value, lap, d_xi = rho.on_grid(xi)
        u = Field(grid, phys.states[i])
        chi = cell_average(u, xi_grid)
        p, q = defect_measures(u, cfg.m, cfg.eta, xi_grid)
        return (_xsum(grid, chi * value) * dxi,
                _xsum(grid, diff_coef * chi * lap) * dxi,
                _xsum(grid, (p + q) * d_xi) * dxi)

    start = pairing(i0)[0]
    end = None
    rhs = 0.0
    for i in range(i0 + 1, i1 + 1):
        pair, diffusion, defect = pairing(i)
        rhs += phys.dt_record * (diffusion - defect)
        end = pair
    if end is None:
        return 0.0
    return abs(end - start - rhs)


def ibp_residual(traj: Trajectory, psi: TestBump, xi_grid: XiGrid | None = None) -> float:
    """Residual of ``int (m+1)/2 |xi|^((m-1)/2) chi grad psi = -int grad u^[(m+1)/2] psi(x, u)``.

    Euclidean norm over the ``d`` gradient components, integrated over ``[0, T]``.
    """
    psi.check_support(traj.grid)
    phys = traj.physical()
    grid, m = phys.grid, phys.config.m
    xi_grid = xi_grid or xi_grid_for(phys)
    xi = xi_grid.centers
    B, gB, _ = psi.x_parts(grid)
    C = psi.xi_parts(xi)[0]
    kin_w = 0.5 * (m + 1) * np.abs(xi) ** (0.5 * (m - 1)) * C
    total = np.zeros(grid.d)
    for wt, u in zip(phys.time_weights(), phys.states):
        if not wt:
            continue
        chi = cell_average(u, xi_grid)
        kin = np.sum(chi * kin_w, axis=-1) * xi_grid.dxi          # shape
        left = np.array([grid.integrate(kin * gB[a]) for a in range(grid.d)])
        grad = grid.gradient(signed_power(u, 0.5 * (m + 1)))
        psi_u = B * psi.xi_parts(u)[0]
        right = np.array([grid.integrate(grad[a] * psi_u) for a in range(grid.d)])
        total += wt * (left + right)
    return float(np.linalg.norm(total))
