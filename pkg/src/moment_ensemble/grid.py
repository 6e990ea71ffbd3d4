"""Parameter-space quadrature grids and discretized ensemble profiles.

Grids come in two flavours: composite midpoint (the uniform discretization
used by the simulations) and tensor Gauss-Legendre (exact for polynomials,
used by identity checks). Gauss grids can be built in multiprecision by
passing ``dps``; node/weight arrays are then ``object`` arrays of
``mpmath.mpf`` and every downstream reduction stays in that arithmetic.
Callers must keep ``mpmath.mp.dps`` raised (e.g. ``mpmath.workdps``) while
working with such arrays, otherwise mpf operations round to double.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import mpmath
import numpy as np

VOLUME_RTOL = 1e-12


def is_multiprecision(arr: np.ndarray) -> bool:
    return np.asarray(arr).dtype == object


def _normalize_bounds(bounds) -> list[tuple[float, float]]:
    bounds = [tuple(b) for b in np.atleast_2d(np.asarray(bounds, dtype=object))]
    out = []
    for a, b in bounds:
        if not b > a:
            raise ValueError(f"degenerate interval [{a}, {b}]")
        out.append((a, b))
    return out


def _gauss_legendre_mp(n: int) -> tuple[list, list]:
    """Gauss-Legendre nodes/weights on [-1, 1] at the current mpmath precision."""
    nodes, weights = [], []
    eps = mpmath.mpf(2) ** (-mpmath.mp.prec + 8)
    for i in range(1, n + 1):
        x = mpmath.cos(mpmath.pi * (i - mpmath.mpf(1) / 4) / (n + mpmath.mpf(1) / 2))
        for _ in range(100):
            p0, p1 = mpmath.mpf(1), x
            for j in range(2, n + 1):
                p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
            dp = n * (x * p1 - p0) / (x * x - 1)
            dx = p1 / dp
            x -= dx
            if abs(dx) < eps:
                break
        p0, p1 = mpmath.mpf(1), x
        for j in range(2, n + 1):
            p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
        dp = n * (x * p1 - p0) / (x * x - 1)
        nodes.append(x)
        weights.append(2 / ((1 - x * x) * dp * dp))
    return nodes[::-1], weights[::-1]


@dataclass(eq=False)
class ParameterGrid:
    """Quadrature discretization of a box Omega = prod_j [a_j, b_j].

    ``nodes`` has shape (P, d) and ``weights`` shape (P,).
    """

    nodes: np.ndarray
    weights: np.ndarray
    bounds: list
    _monomials: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes)
        if self.nodes.ndim == 1:
            self.nodes = self.nodes[:, None]
        self.weights = np.asarray(self.weights)
        self.bounds = _normalize_bounds(self.bounds)
        if self.nodes.shape[1] != len(self.bounds):
            raise ValueError("node dimension does not match bounds")
        if self.weights.shape != (self.nodes.shape[0],):
            raise ValueError("one weight per node required")
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")
        total = self.weights.sum()
        vol = self.volume
        if abs(total - vol) > VOLUME_RTOL * abs(vol):
            raise ValueError(f"weights sum to {total}, box volume is {vol}")
        for j, (a, b) in enumerate(self.bounds):
            col = self.nodes[:, j]
            if np.any(col < a) or np.any(col > b):
                raise ValueError(f"nodes outside bounds on axis {j}")

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def volume(self):
        vol = 1
        for a, b in self.bounds:
            vol = vol * (b - a)
        return vol

    @classmethod
    def uniform(cls, bounds, points: int | Sequence[int]) -> "ParameterGrid":
        """Composite midpoint rule on a tensor grid."""
        bounds = _normalize_bounds(bounds)
        if isinstance(points, int):
            points = [points] * len(bounds)
        axes_nodes, axes_weights = [], []
        for (a, b), p in zip(bounds, points):
            if p < 1:
                raise ValueError("need at least one grid point per axis")
            h = (b - a) / p
            axes_nodes.append(a + h * (np.arange(p) + 0.5))
            axes_weights.append(np.full(p, h))
        return cls._tensor(axes_nodes, axes_weights, bounds)

    @classmethod
    def gauss_legendre(cls, bounds, points: int | Sequence[int],
                       dps: int | None = None) -> "ParameterGrid":
        """Tensor Gauss-Legendre rule; multiprecision when ``dps`` is given."""
        if isinstance(points, int):
            points = [points] * len(np.atleast_2d(np.asarray(bounds, dtype=object)))
        if dps is None:
            bounds = _normalize_bounds(bounds)
            axes_nodes, axes_weights = [], []
            for (a, b), p in zip(bounds, points):
                x, w = np.polynomial.legendre.leggauss(p)
                axes_nodes.append(a + (b - a) * (x + 1) / 2)
                axes_weights.append(w * (b - a) / 2)
            return cls._tensor(axes_nodes, axes_weights, bounds)
        with mpmath.workdps(dps):
            bounds = [(mpmath.mpf(str(a)), mpmath.mpf(str(b)))
                      for a, b in _normalize_bounds(bounds)]
            axes_nodes, axes_weights = [], []
            for (a, b), p in zip(bounds, points):
                x, w = _gauss_legendre_mp(p)
                axes_nodes.append(np.array([a + (b - a) * (xi + 1) / 2 for xi in x], dtype=object))
                axes_weights.append(np.array([wi * (b - a) / 2 for wi in w], dtype=object))
            return cls._tensor(axes_nodes, axes_weights, bounds)

    @classmethod
    def _tensor(cls, axes_nodes, axes_weights, bounds) -> "ParameterGrid":
        obj = any(a.dtype == object for a in axes_nodes)
        dtype = object if obj else float
        nodes = np.array(list(itertools.product(*axes_nodes)), dtype=dtype)
        weights = np.array([np.prod(np.array(ws, dtype=dtype))
                            for ws in itertools.product(*axes_weights)], dtype=dtype)
        return cls(nodes.reshape(-1, len(bounds)), weights, bounds)

    def monomials(self, multiindices) -> np.ndarray:
        """Matrix of beta_p^k, shape (len(multiindices), P), cached per index set."""
        key = tuple(multiindices)
        cached = self._monomials.get(key)
        if cached is not None:
            return cached
        top = max((max(k) for k in key), default=0)
        tables = []
        for j in range(self.d):
            col = self.nodes[:, j]
            tab = [np.ones_like(col) if col.dtype != object
                   else np.array([mpmath.mpf(1)] * len(col), dtype=object)]
            for _ in range(top):
                tab.append(tab[-1] * col)
            tables.append(tab)
        out = np.empty((len(key), self.size), dtype=self.nodes.dtype)
        for r, k in enumerate(key):
            row = tables[0][k[0]]
            for j in range(1, self.d):
                row = row * tables[j][k[j]]
            out[r] = row
        self._monomials[key] = out
        return out


@dataclass(eq=False)
class EnsembleProfile:
    """State samples x(t, beta_p) for every grid node: ``states`` is (P, n)."""

    states: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        states = np.asarray(self.states)
        if states.ndim == 1:
            states = states[:, None]
        if states.dtype != object:
            states = states.astype(float)
            if not np.all(np.isfinite(states)):
                bad = np.argwhere(~np.isfinite(states))[0]
                raise ValueError(f"non-finite state at node {bad[0]}, component {bad[1]}")
        self.states = states

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @classmethod
    def from_function(cls, grid: ParameterGrid, fn, time: float = 0.0) -> "EnsembleProfile":
        """Sample ``fn(beta) -> R^n`` at every node (``beta`` is a length-d array)."""
        rows = [np.atleast_1d(fn(beta)) for beta in grid.nodes]
        dtype = object if any(r.dtype == object for r in rows) else float
        return cls(np.array(rows, dtype=dtype), time)

    @classmethod
    def constant(cls, grid: ParameterGrid, value, time: float = 0.0) -> "EnsembleProfile":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.tile(value, (grid.size, 1)), time)

    def copy(self) -> "EnsembleProfile":
        return EnsembleProfile(self.states.copy(), self.time)
