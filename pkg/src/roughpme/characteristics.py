"""Explicit stochastic characteristics, the change-of-variables weight and transported test functions.

For a path ``z`` (raw or mollified) and coefficients ``f_k`` write
``F_{s,t}(x) = sum_k f_k(x) (z^k_t - z^k_s)``.  Then

* forward characteristic   ``Xi  = xi * exp(F_{s,t}(x))``
* backward characteristic  ``Pi  = xi * exp(-F_{s,t}(x))``
* weight                   ``v   = exp(-F_{s,t}(x)) = 1 / d_xi Xi``

and a test function ``rho0`` is transported as ``rho0(x, Pi) * v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import CoefficientSet, Field, Grid
from .errors import ParameterError


@dataclass(frozen=True)
class CharacteristicContext:
    coefficients: CoefficientSet
    path: object  # SamplePath or MollifiedPath

    def __post_init__(self):
        if self.coefficients.n and self.path.n_channels != self.coefficients.n:
            raise ParameterError(
                f"path has {self.path.n_channels} channels but there are "
                f"{self.coefficients.n} coefficients")

    @property
    def grid(self) -> Grid:
        return self.coefficients.grid

    def _times(self, s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        if np.any(s < 0) or np.any(t < s):
            raise ParameterError("characteristics need 0 <= s <= t")
        return s, t

    def _points(self, x):
        pts = np.asarray(x, dtype=float)
        d = self.grid.d
        if pts.ndim == 0:
            pts = pts.reshape(1, 1)
        elif d == 1 and pts.ndim == 1:
            pts = pts[:, None]
        elif pts.ndim == 1:
            pts = pts[None, :]
        lo = -1e-12
        hi = np.asarray(self.grid.extents) + 1e-12
        if np.any(pts < lo) or np.any(pts > hi):
            raise ParameterError("x must lie in the closed domain")
        return pts

    def exponent(self, x, s, t):
        """``F_{s,t}(x)`` at arbitrary points; broadcasts over points and times."""
        s, t = self._times(s, t)
        scalar = np.ndim(x) == 0 or (self.grid.d > 1 and np.ndim(x) == 1)
        pts = self._points(x)
        if self.coefficients.n == 0:
            out = np.zeros(np.broadcast_shapes(pts.shape[:1], s.shape, t.shape))
        else:
            fvals = self.coefficients.evaluate(pts)[0]                   # (n, npts)
            incr = np.asarray(self.path(t)) - np.asarray(self.path(s))  # (n,) + shape(t)
            out = incr @ fvals if incr.ndim == 1 else np.sum(fvals * incr, axis=0)
        return out[0] if scalar else out

    def exponent_field(self, s: float, t: float):
        """``F_{s,t}``, its gradient ``(d,)+shape`` and Laplacian on the grid nodes."""
        self._times(s, t)
        c = self.coefficients
        if c.n == 0:
            z = np.zeros(self.grid.shape)
            return z, np.zeros((self.grid.d,) + self.grid.shape), z
        incr = np.asarray(self.path(t)) - np.asarray(self.path(s))
        F = np.tensordot(incr, c.values, axes=1)
        gF = np.tensordot(incr, c.gradients, axes=1)
        lF = np.tensordot(incr, c.laplacians, axes=1)
        return F, gF, lF


def xi_forward(ctx: CharacteristicContext, x, xi, s, t):
    return np.asarray(xi) * np.exp(ctx.exponent(x, s, t))


def pi_backward(ctx: CharacteristicContext, x, xi, t, s):
    """Backward characteristic ``Pi^{x,xi}_{t,t-s}``."""
    return np.asarray(xi) * np.exp(-ctx.exponent(x, s, t))


def xi_forward_dxi(ctx: CharacteristicContext, x, s, t):
    return np.exp(ctx.exponent(x, s, t))


def weight_v(ctx: CharacteristicContext, x, s, t):
    """``v_{s,t}(x)``; takes no velocity argument by construction."""
    return np.exp(-ctx.exponent(x, s, t))


def weight_field(ctx: CharacteristicContext, s: float, t: float) -> np.ndarray:
    return np.exp(-ctx.exponent_field(s, t)[0])


# -- test functions -----------------------------------------------------------

def bump_derivatives(s):
    """``b = exp(-1/(1-s^2))`` on ``|s| < 1`` with first and second derivatives."""
    s = np.asarray(s, dtype=float)
    b = np.zeros_like(s)
    b1 = np.zeros_like(s)
    b2 = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    q = 1.0 - si * si
    bi = np.exp(-1.0 / q)
    g1 = -2.0 * si / q**2
    g2 = -2.0 / q**2 - 8.0 * si * si / q**3
    b[inside] = bi
    b1[inside] = bi * g1
    b2[inside] = bi * (g1 * g1 + g2)
    return b, b1, b2


@dataclass(frozen=True)
class TestBump:
    """Tensor product of 1-d bumps in each coordinate and (optionally) in ``xi``.

    ``xi_width=None`` gives a function independent of ``xi``.
    """

    center: tuple
    width: tuple
    xi_center: float = 0.0
    xi_width: float | None = 1.0
    amplitude: float = 1.0

    __test__ = False  # not a pytest class

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(np.atleast_1d(self.center).astype(float)))
        object.__setattr__(self, "width", tuple(np.atleast_1d(self.width).astype(float)))
        if len(self.center) != len(self.width):
            raise ParameterError("center and width need the same length")
        if any(w <= 0 for w in self.width) or (self.xi_width is not None and self.xi_width <= 0):
            raise ParameterError("bump widths must be positive")

    def check_support(self, grid: Grid) -> None:
        if len(self.center) != grid.d:
            raise ParameterError(f"test function is {len(self.center)}-d, grid is {grid.d}-d")
        for c, w, L in zip(self.center, self.width, grid.extents):
            if c - w <= 0.0 or c + w >= L:
                raise ParameterError(
                    f"test function support [{c - w}, {c + w}] touches the boundary of (0, {L})")

    def x_parts(self, grid: Grid):
        """``B(x)``, ``grad B`` and ``Lap B`` on the grid nodes."""
        d = grid.d
        factors = []
        for ax in range(d):
            s = (grid.coords[ax] - self.center[ax]) / self.width[ax]
            b, b1, b2 = bump_derivatives(s)
            factors.append((b, b1 / self.width[ax], b2 / self.width[ax] ** 2))
        B = np.prod([f[0] for f in factors], axis=0)
        gB = np.zeros((d,) + grid.shape)
        lB = np.zeros(grid.shape)
        for ax in range(d):
            rest = np.prod([factors[j][0] for j in range(d) if j != ax], axis=0) if d > 1 else 1.0
            gB[ax] = factors[ax][1] * rest
            lB += factors[ax][2] * rest
        return self.amplitude * B, self.amplitude * gB, self.amplitude * lB

    def xi_parts(self, xi):
        """``C(xi)``, ``C'`` and ``C''``."""
        xi = np.asarray(xi, dtype=float)
        if self.xi_width is None:
            return np.ones_like(xi), np.zeros_like(xi), np.zeros_like(xi)
        b, b1, b2 = bump_derivatives((xi - self.xi_center) / self.xi_width)
        return b, b1 / self.xi_width, b2 / self.xi_width**2

    def value(self, points, xi):
        """``rho0`` at arbitrary points ``(npts, d)`` and velocities; shape ``(npts,) + shape(xi)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        B = np.ones(pts.shape[0])
        for ax in range(pts.shape[1]):
            B = B * bump_derivatives((pts[:, ax] - self.center[ax]) / self.width[ax])[0]
        C = self.xi_parts(xi)[0]
        return self.amplitude * B.reshape(B.shape + (1,) * np.ndim(C)) * C

    def xi_mass(self) -> float:
        """``int C(xi) dxi`` (the bump's velocity mass)."""
        if self.xi_width is None:
            return math.inf
        from scipy import integrate
        val = integrate.quad(lambda s: bump_derivatives(np.array(s))[0].item(), -1, 1,
                             epsabs=1e-14, epsrel=1e-13)[0]
        return val * self.xi_width


class TransportedTestFunction:
    """``rho_{s,t}(x, xi) = rho0(x, Pi^{x,xi}_{t,t-s}) v_{s,t}(x)`` with analytic derivatives."""

    def __init__(self, ctx: CharacteristicContext, base: TestBump, s: float, t: float):
        if t < s:
            raise ParameterError("transport needs s <= t")
        base.check_support(ctx.grid)
        self.ctx, self.base, self.s, self.t = ctx, base, float(s), float(t)

    def __call__(self, points, xi):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        v = weight_v(self.ctx, pts, self.s, self.t)
        v = np.atleast_1d(v)
        xi = np.asarray(xi, dtype=float)
        P = v.reshape(v.shape + (1,) * xi.ndim) * xi
        B = np.ones(pts.shape[0])
        for ax in range(pts.shape[1]):
            B = B * bump_derivatives((pts[:, ax] - self.base.center[ax]) / self.base.width[ax])[0]
        C = self.base.xi_parts(P)[0]
        Bv = (self.base.amplitude * B * v).reshape(v.shape + (1,) * xi.ndim)
        return Bv * C

    def on_grid(self, xi):
        """Value, ``Lap_x`` and ``d_xi`` on ``grid nodes x xi``; arrays shaped ``shape + (n_xi,)``."""
        grid = self.ctx.grid
        xi = np.asarray(xi, dtype=float)
        F, gF, lF = self.ctx.exponent_field(self.s, self.t)
        E = np.exp(-F)[..., None]                       # v_{s,t}
        gE = -E[None] * gF[..., None]                   # (d,) + shape + (1,)
        lE = E * (np.sum(gF**2, axis=0) - lF)[..., None]
        P = E * xi                                      # backward characteristic
        gP = gE * xi
        lP = lE * xi
        B, gB, lB = self.base.x_parts(grid)
        B, lB = B[..., None], lB[..., None]
        gB = gB[..., None]
        C, C1, C2 = self.base.xi_parts(P)
        r0 = B * C
        gx_r0 = gB * C
        lx_r0 = lB * C
        dz_r0 = B * C1
        dzz_r0 = B * C2
        gx_dz_r0 = gB * C1
        value = r0 * E
        d_xi = dz_r0 * E * E
        inner = (lx_r0 + 2.0 * np.sum(gx_dz_r0 * gP, axis=0)
                 + dzz_r0 * np.sum(gP * gP, axis=0) + dz_r0 * lP)
        lap = inner * E + 2.0 * np.sum((gx_r0 + dz_r0 * gP) * gE, axis=0) + r0 * lE
        return value, lap, d_xi


def transport_test_function(ctx, rho0: TestBump, s: float, t: float) -> TransportedTestFunction:
    return TransportedTestFunction(ctx, rho0, s, t)


def small_time_horizon(ctx: CharacteristicContext, phi: Field, T: float, dt: float) -> float:
    """Largest step time ``t*`` with ``max Delta_h(v_{0,r} phi) <= 0`` for every step ``r <= t*``."""
    if not dt > 0:
        raise ParameterError("dt must be positive")
    grid = ctx.grid
    n_steps = int(round(T / dt))
    inner = grid.interior
    last_ok = 0
    for n in range(1, n_steps + 1):
        v = weight_field(ctx, 0.0, n * dt)
        if grid.laplacian(v * phi.values)[inner].max() > 0.0:
            break
        last_ok = n
    return last_ok * dt
