"""Driving signals: fractional Brownian samples, mollification, moduli.

A path is stored on a uniform node grid ``t_j = j * dt_path`` with
``z_0 = 0``; off-node values are linearly interpolated.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.linalg import lapack

from .errors import NumericalError, ParameterError

MAX_STEPS = 2**14
MAX_HORIZON = 1.0e4
MIN_QUADRATURE = 33


def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def _bump_prime(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(-1.0 / (1.0 - si**2)) * (-2.0 * si / (1.0 - si**2) ** 2)
    return out


# unit-mass normalization of exp(-1/(1-s^2)) on (-1, 1)
KERNEL_MASS = integrate.quad(lambda s: math.exp(-1.0 / (1.0 - s * s)), -1.0, 1.0,
                             epsabs=1e-14, epsrel=1e-14)[0]


def kernel(s):
    """Unit-mass mollifier on [-1, 1]."""
    return _bump(s) / KERNEL_MASS


def kernel_prime(s):
    return _bump_prime(s) / KERNEL_MASS


@dataclass(frozen=True)
class SamplePath:
    """Uniformly sampled continuous path ``z: [0, T] -> R^n`` with ``z_0 = 0``."""

    values: np.ndarray
    dt_path: float

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.ndim == 1:
            vals = vals[None, :]
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ParameterError("path values must be a (n_channels, n_nodes) array")
        if not self.dt_path > 0:
            raise ParameterError(f"dt_path must be positive, got {self.dt_path}")
        if np.any(vals[:, 0] != 0.0):
            raise ParameterError("every channel must start at 0")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "dt_path", float(self.dt_path))

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1] - 1

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt_path

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt_path

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        tol = 1e-12 * max(1.0, self.horizon)
        if np.any(t < -tol) or np.any(t > self.horizon + tol):
            raise ParameterError(
                f"time outside the path horizon [0, {self.horizon}]: {t}")
        return t

    def _interp(self, t):
        """Linear interpolation with constant extension outside [0, horizon]."""
        t = np.asarray(t, dtype=float)
        if self.n_steps == 0:
            return np.zeros((self.n_channels,) + t.shape)
        x = np.clip(t / self.dt_path, 0.0, float(self.n_steps))
        j = np.minimum(x.astype(np.intp), self.n_steps - 1)  # floor, since x >= 0
        frac = x - j
        out = np.empty((self.n_channels,) + t.shape)
        # per-channel take is several times faster than fancy indexing on the 2-d array
        for k, v in enumerate(self.values):
            out[k] = v.take(j) + np.diff(v).take(j) * frac
        return out

    def __call__(self, t):
        """Path value(s) at time ``t``; shape ``(n_channels,) + shape(t)``."""
        return self._interp(self._check_time(t))

    def shifted(self, s: float) -> "SamplePath":
        """The shift ``r -> z_{s+r} - z_s`` on the same node spacing."""
        s = float(self._check_time(s))
        n = int(math.floor((self.horizon - s) / self.dt_path + 1e-9))
        r = s + np.arange(n + 1) * self.dt_path
        vals = self._interp(r)
        return SamplePath(vals - vals[:, :1], self.dt_path)

    def to_csv(self, path) -> None:
        data = np.column_stack([self.times, self.values.T])
        header = ",".join(["t"] + [f"z{k + 1}" for k in range(self.n_channels)])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "SamplePath":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        if not header or header[0] != "t" or len(header) < 2:
            raise ParameterError(f"{path}: expected header 't,z1,...,zn'")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        if len(t) > 1:
            steps = np.diff(t)
            dt = steps.mean()
            if not np.allclose(steps, dt, rtol=1e-9, atol=0.0):
                raise ParameterError(f"{path}: time column is not uniform")
        else:
            dt = 1.0
        return from_samples(data[:, 1:].T, dt)


def from_samples(values, dt_path: float) -> SamplePath:
    """Build a path from per-channel samples, shifting each channel to start at 0."""
    if not dt_path > 0:
        raise ParameterError(f"dt_path must be positive, got {dt_path}")
    if isinstance(values, np.ndarray):
        arr = np.atleast_2d(values.astype(float))
    else:
        rows = list(values)
        if rows and np.ndim(rows[0]) == 0:
            arr = np.asarray(rows, dtype=float)[None, :]
        else:
            lengths = sorted({len(r) for r in rows})
            if len(lengths) != 1:
                raise ParameterError(f"ragged channel lengths {lengths}")
            arr = np.asarray(rows, dtype=float)
    if arr.shape[1] < 1:
        raise ParameterError("a path needs at least one sample")
    return SamplePath(arr - arr[:, :1], dt_path)


@functools.lru_cache(maxsize=16)
def _fbm_factor(hurst: float, n_steps: int, dt_path: float) -> np.ndarray:
    t = np.arange(1, n_steps + 1) * dt_path
    two_h = 2.0 * hurst
    cov = 0.5 * (t[:, None] ** two_h + t[None, :] ** two_h
                 - np.abs(t[:, None] - t[None, :]) ** two_h)
    chol, info = lapack.dpotrf(cov, lower=1, clean=1)
    if info > 0:
        raise NumericalError(
            f"fBM covariance is not positive definite: Cholesky pivot {info} "
            f"(t = {t[info - 1]:.6g}) failed for H={hurst}, n_steps={n_steps}")
    if info < 0:
        raise NumericalError(f"dpotrf rejected argument {-info}")
    chol.setflags(write=False)
    return chol


def sample_fbm(hurst: float, n_channels: int, n_steps: int, dt_path: float,
               seed: int, horizon: float = MAX_HORIZON) -> SamplePath:
    """Exact-covariance fractional Brownian motion by dense Cholesky factorization.

    Channels are independent; equal seeds give bitwise-equal paths.
    """
    if not 0.0 < hurst < 1.0:
        raise ParameterError(f"Hurst parameter must lie in (0, 1), got {hurst}")
    if n_channels < 1 or n_steps < 0:
        raise ParameterError("n_channels must be >= 1 and n_steps >= 0")
    if not dt_path > 0:
        raise ParameterError(f"dt_path must be positive, got {dt_path}")
    if n_steps > MAX_STEPS:
        raise ParameterError(f"n_steps={n_steps} exceeds the dense limit {MAX_STEPS}")
    if n_steps * dt_path > horizon * (1 + 1e-12):
        raise ParameterError(f"n_steps*dt_path={n_steps * dt_path} exceeds horizon {horizon}")
    values = np.zeros((n_channels, n_steps + 1))
    if n_steps > 0:
        chol = _fbm_factor(float(hurst), int(n_steps), float(dt_path))
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((n_channels, n_steps))
        values[:, 1:] = noise @ chol.T
    return SamplePath(values, dt_path)


@dataclass(frozen=True)
class MollifiedPath:
    """Time convolution of a sampled path with the scaled mollifier.

    Evaluation at ``t`` uses base values at ``s v 0`` for ``s < 0``.  The
    convolution is a composite midpoint rule with at least 33 nodes on
    ``[-eps, eps]`` and at least four nodes per path cell.  Both weight sets
    are rescaled so constants and linear paths are reproduced exactly.
    """

    base: SamplePath
    epsilon: float
    n_quad: int = field(default=0)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if self.epsilon < 2.0 * self.base.dt_path * (1 - 1e-12):
            raise ParameterError(
                f"epsilon={self.epsilon} < 2*dt_path={2 * self.base.dt_path}: "
                "kernel not resolved by the path samples")
        nq = self.n_quad or max(MIN_QUADRATURE,
                                4 * int(math.ceil(2 * self.epsilon / self.base.dt_path)) + 1)
        if nq < MIN_QUADRATURE:
            raise ParameterError(f"n_quad must be >= {MIN_QUADRATURE}")
        object.__setattr__(self, "n_quad", nq)
        sigma = -1.0 + (2.0 * np.arange(nq) + 1.0) / nq
        w = kernel(sigma) * (2.0 / nq)
        wd = -kernel_prime(sigma) * (2.0 / nq)
        # discrete moments made exact: unit mass, and unit slope on linear paths
        object.__setattr__(self, "_sigma", sigma)
        object.__setattr__(self, "_w", w / w.sum())
        object.__setattr__(self, "_wd", wd / np.dot(wd, sigma))

    @property
    def n_channels(self) -> int:
        return self.base.n_channels

    @property
    def horizon(self) -> float:
        return self.base.horizon

    def evaluate(self, t):
        """Return ``(z_eps, dz_eps)`` each shaped ``(n_channels,) + shape(t)``."""
        t = self.base._check_time(t)
        s = t[..., None] + self.epsilon * self._sigma
        zs = self.base._interp(s)
        z_eps = zs @ self._w
        dz_eps = (zs @ self._wd) / self.epsilon
        return z_eps, dz_eps

    def __call__(self, t):
        t = self.base._check_time(t)
        return self.base._interp(t[..., None] + self.epsilon * self._sigma) @ self._w


def mollify(path: SamplePath, epsilon: float, n_quad: int = 0) -> MollifiedPath:
    return MollifiedPath(path, epsilon, n_quad)


def mollify_eval(path: MollifiedPath, t):
    """``(z^eps_t, d/dt z^eps_t)`` for a mollified path."""
    return path.evaluate(t)


def increment(path, s, t):
    """``z_t - z_s`` componentwise, for raw or mollified paths."""
    return np.asarray(path(t)) - np.asarray(path(s))


def modulus_of_continuity(path: SamplePath, delta: float, T: float) -> float:
    """Max-norm modulus ``sup |z_t - z_s|`` over nodes in ``[0, T]`` with ``|t - s| <= delta``.

    ``delta`` is rounded up to the node spacing, so lags below one step give
    the largest single-step increment.
    """
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    if T < 0 or T > path.horizon * (1 + 1e-12):
        raise ParameterError(f"T={T} outside [0, {path.horizon}]")
    n_t = int(math.floor(T / path.dt_path + 1e-9))
    lag = max(1, int(math.ceil(delta / path.dt_path - 1e-9)))
    lag = min(lag, n_t)
    z = path.values[:, : n_t + 1]
    best = 0.0
    for k in range(1, lag + 1):
        best = max(best, float(np.abs(z[:, k:] - z[:, :-k]).max()))
    return best
