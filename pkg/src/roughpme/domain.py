"""Uniform Dirichlet grids, node fields, the torsion weight and noise coefficients."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError, ParameterError


@dataclass(frozen=True)
class Grid:
    """Uniform node grid on ``(0, L_1) x ... x (0, L_d)`` including the boundary layer."""

    d: int
    extents: tuple
    nodes: tuple

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ParameterError(f"dimension must be 1 or 2, got {self.d}")
        if len(self.extents) != self.d or len(self.nodes) != self.d:
            raise ParameterError("extents and nodes_per_axis need one entry per axis")
        if any(n < 3 for n in self.nodes):
            raise ParameterError(f"need at least 3 nodes per axis, got {self.nodes}")
        if any(not L > 0 for L in self.extents):
            raise ParameterError(f"extents must be positive, got {self.extents}")
        hs = [L / (n - 1) for L, n in zip(self.extents, self.nodes)]
        if max(hs) - min(hs) > 1e-12 * max(hs):
            raise ParameterError(f"non-uniform spacing requested: {hs}")

    @property
    def h(self) -> float:
        return self.extents[0] / (self.nodes[0] - 1)

    @property
    def shape(self) -> tuple:
        return tuple(self.nodes)

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @cached_property
    def axes(self) -> list:
        return [np.arange(n) * self.h for n in self.nodes]

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(d,) + shape``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates flattened to ``(size, d)``."""
        return self.coords.reshape(self.d, -1).T

    @cached_property
    def interior(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.d] = True
        return mask

    @property
    def boundary(self) -> np.ndarray:
        return ~self.interior

    @property
    def interior_shape(self) -> tuple:
        return tuple(n - 2 for n in self.nodes)

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Trapezoid weights including ``h^d`` (half cells on faces)."""
        w = np.ones(self.shape)
        for ax in range(self.d):
            idx = [slice(None)] * self.d
            idx[ax] = 0
            w[tuple(idx)] *= 0.5
            idx[ax] = -1
            w[tuple(idx)] *= 0.5
        w.setflags(write=False)
        return w * self.h**self.d

    def integrate(self, values) -> float:
        return float(np.sum(self.quad_weights * values))

    @cached_property
    def laplacian_matrix(self) -> sp.csc_matrix:
        """Centered Laplacian on interior unknowns, zero Dirichlet data."""
        n = self.interior_shape
        ops = []
        for ax in range(self.d):
            k = n[ax]
            lap1 = sp.diags([np.ones(k - 1), -2.0 * np.ones(k), np.ones(k - 1)],
                            [-1, 0, 1]) / self.h**2
            mats = [sp.identity(nn) for nn in n]
            mats[ax] = lap1
            op = mats[0]
            for mm in mats[1:]:
                op = sp.kron(op, mm)
            ops.append(op)
        return sp.csc_matrix(sum(ops))

    def laplacian(self, values) -> np.ndarray:
        """Centered Laplacian of a full-grid array at interior nodes (zero on the boundary)."""
        values = np.asarray(values, dtype=float)
        out = np.zeros(values.shape)
        core = (slice(1, -1),) * self.d
        acc = -2.0 * self.d * values[core]
        for ax in range(self.d):
            up = [slice(1, -1)] * self.d
            dn = [slice(1, -1)] * self.d
            up[ax] = slice(2, None)
            dn[ax] = slice(None, -2)
            acc = acc + values[tuple(up)] + values[tuple(dn)]
        out[core] = acc / self.h**2
        return out

    def gradient(self, values) -> np.ndarray:
        """Centered differences inside, second-order one-sided on faces; shape ``(d,) + shape``."""
        values = np.asarray(values, dtype=float)
        if self.d == 1:
            return np.gradient(values, self.h, edge_order=2)[None, ...]
        return np.stack(np.gradient(values, self.h, edge_order=2))

    def restrict(self, values) -> np.ndarray:
        return np.asarray(values)[self.interior]

    def extend(self, interior_values) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.interior] = interior_values
        return out


def build_grid(d: int, extents, nodes_per_axis) -> Grid:
    """Uniform grid; scalar ``extents``/``nodes_per_axis`` are broadcast over axes."""
    if np.ndim(extents) == 0:
        extents = (extents,) * d
    if np.ndim(nodes_per_axis) == 0:
        nodes_per_axis = (nodes_per_axis,) * d
    return Grid(int(d), tuple(float(e) for e in extents), tuple(int(n) for n in nodes_per_axis))


@dataclass(frozen=True)
class Field:
    """Real values on every node of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ParameterError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def _other(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ParameterError("field arithmetic requires identical grids")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / self._other(other))

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __abs__(self):
        return Field(self.grid, np.abs(self.values))

    def to_csv(self, path) -> None:
        cols = [self.grid.coords[a].ravel() for a in range(self.grid.d)]
        names = ["x", "y"][: self.grid.d] + ["value"]
        data = np.column_stack(cols + [self.values.ravel()])
        np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


def solve_phi(grid: Grid) -> Field:
    """Discrete torsion function: ``Delta_h phi = -1`` inside, ``phi = 0`` on the boundary."""
    A = grid.laplacian_matrix
    rhs = -np.ones(A.shape[0])
    phi_in = spla.spsolve(A, rhs)
    res = np.linalg.norm(A @ phi_in - rhs)
    # normwise backward error; a raw 1e-12*||rhs|| test sits below the
    # round-off floor of computing A @ x on fine grids
    scale = spla.norm(A, np.inf) * np.linalg.norm(phi_in) + np.linalg.norm(rhs)
    if not np.all(np.isfinite(phi_in)) or res > 1e-12 * scale:
        raise NumericalError(f"torsion solve residual {res:.3e} above tolerance {1e-12 * scale:.3e}")
    return Field(grid, grid.extend(phi_in))


def weighted_lp_norm(u, weight, p: float = 1.0) -> float:
    """``(sum_j q_j w_j |u_j|^p)^(1/p)`` with trapezoid weights ``q_j``."""
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    if isinstance(u, Field) and isinstance(weight, Field) and u.grid != weight.grid:
        raise ParameterError("norm arguments live on different grids")
    if not isinstance(u, Field) and not isinstance(weight, Field):
        raise ParameterError("weighted_lp_norm needs at least one Field argument for the grid")
    grid = u.grid if isinstance(u, Field) else weight.grid
    uu = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
    ww = weight.values if isinstance(weight, Field) else np.asarray(weight, dtype=float)
    if np.any(ww < 0):
        raise ParameterError("weight must be nonnegative")
    total = float(np.sum(grid.quad_weights * ww * np.abs(uu) ** p))
    return total ** (1.0 / p)


def poincare_constant(grid: Grid) -> float:
    """Largest ``||g||^2 / ||grad_h g||^2`` over boundary-vanishing node fields.

    Dense generalized eigenproblem; intended for small grids.
    """
    n_in = int(np.prod(grid.interior_shape))
    if n_in > 4000:
        raise ParameterError("poincare_constant is dense; use a grid with <= 4000 interior nodes")
    E = np.zeros((grid.size, n_in))
    E[np.flatnonzero(grid.interior.ravel()), np.arange(n_in)] = 1.0
    G = []
    for col in E.T:
        G.append(grid.gradient(col.reshape(grid.shape)).reshape(grid.d, -1))
    G = np.stack(G, axis=-1)  # (d, size, n_in)
    q = grid.quad_weights.ravel()
    mass = E.T @ (q[:, None] * E)
    stiff = sum(G[a].T @ (q[:, None] * G[a]) for a in range(grid.d))
    evals = scipy.linalg.eigh(mass, stiff, eigvals_only=True)
    return float(evals[-1])


# -- noise coefficients ------------------------------------------------------

@dataclass(frozen=True)
class CoefficientSpec:
    """Closed-form coefficient descriptor: ``constant``, ``cosine`` or ``gaussian``."""

    kind: str
    params: dict = field(default_factory=dict)

    KINDS = ("constant", "cosine", "gaussian")
    PARAMS = {"constant": ("c",), "cosine": ("a", "b", "period"),
              "gaussian": ("amp", "center", "width")}

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ParameterError(f"unknown coefficient descriptor {self.kind!r}; "
                                 f"expected one of {self.KINDS}")
        unknown = set(self.params) - set(self.PARAMS[self.kind])
        if unknown:
            raise ParameterError(f"unknown parameter(s) {sorted(unknown)} for {self.kind}")

    def evaluate(self, points, extents):
        """Value, gradient and Hessian at ``points`` of shape ``(npts, d)``."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        npts, d = x.shape
        p = self.params
        val = np.zeros(npts)
        grad = np.zeros((d, npts))
        hess = np.zeros((d, d, npts))
        if self.kind == "constant":
            val[:] = p.get("c", 0.0)
        elif self.kind == "cosine":
            a, b = p.get("a", 0.0), p.get("b", 1.0)
            periods = [p.get("period", L) for L in extents]
            k = np.array([2 * math.pi / P for P in periods])
            c = np.cos(k[None, :] * x)
            s = np.sin(k[None, :] * x)
            prod = np.prod(c, axis=1)
            val = a + b * prod
            for i in range(d):
                others = np.prod(np.delete(c, i, axis=1), axis=1)
                grad[i] = -b * k[i] * s[:, i] * others
                for j in range(d):
                    if i == j:
                        hess[i, i] = -b * k[i] ** 2 * prod
                    else:
                        rest = np.prod(np.delete(c, [i, j], axis=1), axis=1)
                        hess[i, j] = b * k[i] * k[j] * s[:, i] * s[:, j] * rest
        else:
            amp = p.get("amp", 1.0)
            width = p.get("width", 0.1)
            center = np.broadcast_to(np.asarray(p.get("center", [L / 2 for L in extents]),
                                                dtype=float), (d,))
            r = x - center[None, :]
            g = amp * np.exp(-np.sum(r**2, axis=1) / (2 * width**2))
            val = g
            for i in range(d):
                grad[i] = -g * r[:, i] / width**2
                for j in range(d):
                    hess[i, j] = g * (r[:, i] * r[:, j] / width**4 - (i == j) / width**2)
        return val, grad, hess

    def sup_bound(self) -> float:
        p = self.params
        if self.kind == "constant":
            return abs(p.get("c", 0.0))
        if self.kind == "cosine":
            return abs(p.get("a", 0.0)) + abs(p.get("b", 1.0))
        return abs(p.get("amp", 1.0))


@dataclass(frozen=True)
class CoefficientSet:
    """Noise coefficients ``f_k`` with node values, gradients and Hessians."""

    grid: Grid
    specs: tuple
    values: np.ndarray     # (n,) + shape
    gradients: np.ndarray  # (n, d) + shape
    hessians: np.ndarray   # (n, d, d) + shape
    sup_norm: float

    @property
    def n(self) -> int:
        return len(self.specs)

    @property
    def laplacians(self) -> np.ndarray:
        return np.trace(self.hessians, axis1=1, axis2=2).reshape((self.n,) + self.grid.shape)

    def is_zero(self) -> bool:
        return not np.any(self.values) and not np.any(self.gradients)

    def evaluate(self, points):
        """Values ``(n, npts)``, gradients ``(n, d, npts)``, Hessians ``(n, d, d, npts)``."""
        out = [s.evaluate(points, self.grid.extents) for s in self.specs]
        if not out:
            npts = np.atleast_2d(points).shape[0]
            d = self.grid.d
            return np.zeros((0, npts)), np.zeros((0, d, npts)), np.zeros((0, d, d, npts))
        return tuple(np.stack(parts) for parts in zip(*out))


def build_coefficients(grid: Grid, specs) -> CoefficientSet:
    specs = tuple(s if isinstance(s, CoefficientSpec) else CoefficientSpec(*s) for s in specs)
    shape = grid.shape
    d = grid.d
    vals, grads, hesss = [], [], []
    for s in specs:
        v, g, h = s.evaluate(grid.points, grid.extents)
        vals.append(v.reshape(shape))
        grads.append(g.reshape((d,) + shape))
        hesss.append(h.reshape((d, d) + shape))
    n = len(specs)
    values = np.stack(vals) if n else np.zeros((0,) + shape)
    gradients = np.stack(grads) if n else np.zeros((0, d) + shape)
    hessians = np.stack(hesss) if n else np.zeros((0, d, d) + shape)
    sup = max((s.sup_bound() for s in specs), default=0.0)
    for arr in (values, gradients, hessians):
        arr.setflags(write=False)
    return CoefficientSet(grid, specs, values, gradients, hessians, sup)
