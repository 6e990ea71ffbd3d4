"""Moment sequences and the Hausdorff machinery built on them.

Ensemble moments integrate the state profile against monomials in the
parameter, ``m_k = int beta^k x(beta) dbeta``; output moments integrate
monomials in the state itself, ``int x(beta)^k dbeta``. Both are stored as a
:class:`MomentSequence`, a dense array over every multi-index of total order
at most ``max_order``.

Iterated differences of moments lose roughly ``2**n`` in relative accuracy,
so anything past n ~ 20 in double precision is noise. All routines here are
dtype-agnostic: feed them multiprecision moments (object arrays of
``mpmath.mpf``, see :mod:`moment_ensemble.grid`) for high-order work.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .grid import EnsembleProfile, ParameterGrid
from .multiindex import (
    MultiIndex,
    box,
    count_multiindices,
    enumerate_multiindices,
    multi_binomial,
    multi_factorial_count,
)


class TruncationError(ValueError):
    """An operation needs moments beyond the stored truncation order."""


@lru_cache(maxsize=None)
def _positions(d: int, max_order: int) -> dict:
    return {k: r for r, k in enumerate(enumerate_multiindices(d, max_order))}


@dataclass(eq=False)
class MomentSequence:
    """Truncated moments: ``values[r, i]`` is the moment of multi-index
    ``indices[r]`` for state component ``i`` (0-based here, 1-based in CSV)."""

    dim_param: int
    max_order: int
    values: np.ndarray
    _pos: dict = field(init=False, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim == 1:
            values = values[:, None]
        expected = count_multiindices(self.dim_param, self.max_order)
        if values.shape[0] != expected:
            raise ValueError(
                f"expected {expected} rows for d={self.dim_param}, N={self.max_order}, "
                f"got {values.shape[0]}")
        if values.dtype != object:
            values = values.astype(float)
            if not np.all(np.isfinite(values)):
                raise ValueError("moment values must be finite")
        self.values = values
        self._pos = _positions(self.dim_param, self.max_order)

    @property
    def dim_state(self) -> int:
        return self.values.shape[1]

    @property
    def indices(self) -> list[MultiIndex]:
        return enumerate_multiindices(self.dim_param, self.max_order)

    def row(self, k) -> int:
        k = MultiIndex(k)
        if len(k) != self.dim_param:
            raise ValueError(f"multi-index {tuple(k)} has wrong dimension")
        try:
            return self._pos[k]
        except KeyError:
            raise TruncationError(
                f"moment {tuple(k)} beyond truncation order {self.max_order}") from None

    def __getitem__(self, k) -> np.ndarray:
        return self.values[self.row(k)]

    def orders(self) -> np.ndarray:
        return np.array([k.order() for k in self.indices])

    def truncate(self, max_order: int) -> "MomentSequence":
        if max_order > self.max_order:
            raise TruncationError("cannot extend a truncated sequence")
        rows = count_multiindices(self.dim_param, max_order)
        return MomentSequence(self.dim_param, max_order, self.values[:rows].copy())

    def as_float(self) -> "MomentSequence":
        return MomentSequence(self.dim_param, self.max_order,
                              np.array(self.values, dtype=float))

    def to_box(self, component: int, upper: Sequence[int]) -> np.ndarray:
        """Dense array A[k_1, ..., k_d] for 0 <= k <= upper componentwise."""
        if sum(upper) > self.max_order:
            raise TruncationError(
                f"box {tuple(upper)} needs order {sum(upper)} > {self.max_order}")
        out = np.empty(tuple(u + 1 for u in upper), dtype=self.values.dtype)
        for k in box(upper):
            out[tuple(k)] = self.values[self._pos[k], component]
        return out

    @classmethod
    def zeros(cls, dim_param: int, max_order: int, dim_state: int) -> "MomentSequence":
        rows = count_multiindices(dim_param, max_order)
        return cls(dim_param, max_order, np.zeros((rows, dim_state)))

    @classmethod
    def from_function(cls, dim_param: int, max_order: int, fn) -> "MomentSequence":
        """Build from ``fn(k: MultiIndex) -> array of length n``."""
        rows = [np.atleast_1d(fn(k)) for k in enumerate_multiindices(dim_param, max_order)]
        dtype = object if any(r.dtype == object for r in rows) else float
        return cls(dim_param, max_order, np.array(rows, dtype=dtype))


def compute_ensemble_moments(profile: EnsembleProfile, grid: ParameterGrid,
                             max_order: int) -> MomentSequence:
    """Quadrature of beta^k x_i(beta) over the grid for every |k| <= max_order."""
    if profile.size != grid.size:
        raise ValueError(f"profile has {profile.size} nodes, grid has {grid.size}")
    if max_order < 0:
        raise ValueError("max_order must be >= 0")
    idx = enumerate_multiindices(grid.d, max_order)
    mono = grid.monomials(idx)
    weighted = grid.weights[:, None] * profile.states
    if mono.dtype == object or weighted.dtype == object:
        values = (mono[:, :, None] * weighted[None, :, :]).sum(axis=1)
    else:
        values = mono @ weighted
    return MomentSequence(grid.d, max_order, values)


def compute_output_moments(profile: EnsembleProfile, grid: ParameterGrid,
                           max_order: int) -> MomentSequence:
    """Quadrature of x(beta)^k, k a multi-index over state components.

    The result has ``dim_param == profile.n`` and a single value column.
    """
    if profile.size != grid.size:
        raise ValueError(f"profile has {profile.size} nodes, grid has {grid.size}")
    x = profile.states
    n = profile.n
    idx = enumerate_multiindices(n, max_order)
    powers = [[np.ones_like(x[:, i])] for i in range(n)]
    for i in range(n):
        for _ in range(max_order):
            powers[i].append(powers[i][-1] * x[:, i])
    values = np.empty((len(idx), 1), dtype=x.dtype)
    for r, k in enumerate(idx):
        term = powers[0][k[0]]
        for i in range(1, n):
            term = term * powers[i][k[i]]
        values[r, 0] = (grid.weights * term).sum()
    return MomentSequence(n, max_order, values)


def _binom_scalar(c: int, like):
    # exact integer until it meets the value's arithmetic
    return float(c) if isinstance(like, (float, np.floating)) or (
        isinstance(like, np.ndarray) and like.dtype != object) else c


def difference_operator(m: MomentSequence, n, k, component: int | None = None):
    """Tensor difference Delta_1^{n_1} ... Delta_d^{n_d} m_k.

    Returns one value per state component, or a scalar when ``component`` is
    given.
    """
    n, k = MultiIndex(n), MultiIndex(k)
    if n.order() + k.order() > m.max_order:
        raise TruncationError(
            f"Delta^{tuple(n)} m_{tuple(k)} needs order {n.order() + k.order()}, "
            f"have {m.max_order}")
    cols = m.values if component is None else m.values[:, component]
    total = None
    for i in box(n):
        c = multi_binomial(n, i) * (-1) ** i.order()
        term = cols[m.row(k + i)] * _binom_scalar(c, cols)
        total = term if total is None else total + term
    return total


def difference_table(m: MomentSequence, component: int, upper: Sequence[int]) -> np.ndarray:
    """All differences Delta^j m_k with j + k <= upper componentwise.

    Returns an array of shape ``(u_1+1, ..., u_d+1, u_1+1, ..., u_d+1)``
    indexed ``[j_1, ..., j_d, k_1, ..., k_d]``; entries with j_a + k_a > u_a
    are left at zero and must not be read.
    """
    upper = tuple(int(u) for u in upper)
    d = len(upper)
    base = m.to_box(component, upper)
    shape = tuple(u + 1 for u in upper)
    table = np.zeros(shape + shape, dtype=base.dtype)
    if base.dtype == object:
        table[...] = 0
    table[(0,) * d] = base
    for a in range(d):
        for j in range(1, upper[a] + 1):
            hi = upper[a] - j + 1
            dst = [slice(None)] * (2 * d)
            prev = [slice(None)] * (2 * d)
            nxt = [slice(None)] * (2 * d)
            dst[a], prev[a], nxt[a] = j, j - 1, j - 1
            dst[d + a] = slice(0, hi)
            prev[d + a] = slice(0, hi)
            nxt[d + a] = slice(1, hi + 1)
            table[tuple(dst)] = table[tuple(prev)] - table[tuple(nxt)]
    return table


def bernstein_coefficients(table: np.ndarray, n: Sequence[int]) -> np.ndarray:
    """C(n, k) Delta^{n-k} m_k for every k <= n, shaped (n_1+1, ..., n_d+1)."""
    n = tuple(n)
    out = np.empty(tuple(a + 1 for a in n), dtype=table.dtype)
    for k in itertools.product(*(range(a + 1) for a in n)):
        j = tuple(a - b for a, b in zip(n, k))
        val = table[j + k]
        out[k] = val * _binom_scalar(multi_binomial(n, k), val)
    return out


def bernstein_basis(n: Sequence[int], beta) -> np.ndarray:
    """prod_a C(n_a, k_a) beta_a^{k_a} (1 - beta_a)^{n_a - k_a} for all k <= n.

    ``beta`` has shape (P, d); the result has shape (P, n_1+1, ..., n_d+1)
    and sums to 1 over k at every point.
    """
    n = tuple(int(a) for a in n)
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    if beta.shape[1] != len(n):
        raise ValueError(f"points have dimension {beta.shape[1]}, n has {len(n)}")
    out = np.ones((beta.shape[0],) + tuple(a + 1 for a in n))
    for axis, na in enumerate(n):
        k = np.arange(na + 1)
        c = np.array([math.comb(na, kk) for kk in k], dtype=float)
        b = beta[:, axis:axis + 1]
        factor = c * b ** k * (1.0 - b) ** (na - k)
        shape = [beta.shape[0]] + [1] * len(n)
        shape[axis + 1] = na + 1
        out = out * factor.reshape(shape)
    return out


@dataclass
class HausdorffReport:
    """Outcome of a Hausdorff condition sweep.

    ``per_n`` pairs each tested multi-index n with its value per state
    component; ``max_value`` is the running maximum, the empirical constant C.
    """

    norm: str
    up_to: int
    max_value: float
    per_n: list = field(default_factory=list)

    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.per_n], dtype=float)


def _check_hausdorff(m: MomentSequence, up_to: int, norm: str) -> HausdorffReport:
    if up_to < 0:
        raise ValueError("up_to must be >= 0")
    if m.dim_param * up_to > m.max_order:
        raise TruncationError(
            f"testing n <= {up_to} per axis in d={m.dim_param} needs order "
            f"{m.dim_param * up_to}, sequence is truncated at {m.max_order}")
    upper = (up_to,) * m.dim_param
    tables = [difference_table(m, i, upper) for i in range(m.dim_state)]
    per_n = []
    best = None
    for n in box(upper):
        vals = []
        for table in tables:
            coeffs = bernstein_coefficients(table, n).ravel()
            if norm == "l2":
                v = multi_factorial_count(n) * sum(c * c for c in coeffs)
            else:
                v = sum(abs(c) for c in coeffs)
            vals.append(v)
            best = v if best is None or v > best else best
        per_n.append((n, np.array([float(v) for v in vals])))
    return HausdorffReport(norm, up_to, float(best), per_n)


def check_hausdorff_l2(m: MomentSequence, up_to: int) -> HausdorffReport:
    """Sweep (n+1) sum_k [C(n,k) Delta^{n-k} m_k]^2 over n <= up_to per axis.

    A sequence is the moment sequence of a square-integrable function on the
    unit cube iff this stays bounded; for such a function the bound is its
    squared L2 norm.
    """
    return _check_hausdorff(m, up_to, "l2")


def check_hausdorff_l1(m: MomentSequence, up_to: int) -> HausdorffReport:
    """Sweep sum_k |C(n,k) Delta^{n-k} m_k| over n <= up_to per axis
    (bounded iff m comes from a signed measure on the unit cube)."""
    return _check_hausdorff(m, up_to, "l1")


def rescale_moments(m_unit: MomentSequence, a, b) -> MomentSequence:
    """Moments of the pushforward of a measure on [0,1]^d under
    beta -> a + (b - a) beta, applied axis-wise.

    ``a`` and ``b`` may be scalars (same interval on every axis) or
    per-axis sequences.
    """
    d = m_unit.dim_param
    a = list(np.broadcast_to(np.asarray(a, dtype=object), (d,)))
    b = list(np.broadcast_to(np.asarray(b, dtype=object), (d,)))
    for aj, bj in zip(a, b):
        if not bj > aj:
            raise ValueError(f"b must exceed a (got a={aj}, b={bj})")
    obj = m_unit.values.dtype == object
    if not obj:
        a = [float(x) for x in a]
        b = [float(x) for x in b]
    # per-axis coefficient tables C(k, i) a^{k-i} (b-a)^i
    top = m_unit.max_order
    coef = []
    for aj, bj in zip(a, b):
        span = bj - aj
        tab = [[math.comb(kk, i) * aj ** (kk - i) * span ** i for i in range(kk + 1)]
               for kk in range(top + 1)]
        coef.append(tab)
    out = np.zeros_like(m_unit.values)
    if obj:
        out[...] = 0
    for r, k in enumerate(m_unit.indices):
        acc = 0
        for i in box(k):
            c = 1
            for j in range(d):
                c = c * coef[j][k[j]][i[j]]
            acc = acc + c * m_unit.values[m_unit.row(i)]
        out[r] = acc
    return MomentSequence(d, m_unit.max_order, out)


def _signed_root(x, p: int) -> float:
    x = float(x)
    return math.copysign(abs(x) ** (1.0 / p), x)


def radical_distance(m: MomentSequence, n: MomentSequence) -> float:
    """sup over 1 <= |k| <= N of |root_k(m_k) - root_k(n_k)|, root_k the
    real |k|-th root (odd-root sign convention for negative moments)."""
    if (m.dim_param, m.max_order, m.dim_state) != (n.dim_param, n.max_order, n.dim_state):
        raise ValueError("sequences must share dimension and truncation order")
    best = 0.0
    for r, k in enumerate(m.indices):
        p = k.order()
        if p == 0:
            continue
        for i in range(m.dim_state):
            gap = abs(_signed_root(m.values[r, i], p) - _signed_root(n.values[r, i], p))
            best = max(best, gap)
    return best


def inversion_lattice(d: int, n_grid: int) -> np.ndarray:
    """Lattice points k / n_grid, k in {0..n_grid}^d, in the order used by
    :func:`invert_moments`."""
    return np.array([[kj / n_grid for kj in k] for k in box((n_grid,) * d)], dtype=float)


def invert_moments(m: MomentSequence, n_grid: int) -> EnsembleProfile:
    """Bernstein-type density estimate phi(k/n) ~ (n+1) C(n,k) Delta^{n-k} m_k.

    Moments must be taken over the unit cube. Rows of the returned profile
    follow :func:`inversion_lattice`. Values are returned in double
    precision whatever the input arithmetic.
    """
    if n_grid < 1:
        raise ValueError("n_grid must be >= 1")
    d = m.dim_param
    if m.max_order < n_grid * d:
        raise TruncationError(
            f"inversion on a {n_grid}-lattice in d={d} needs order {n_grid * d}, "
            f"have {m.max_order}")
    upper = (n_grid,) * d
    scale = multi_factorial_count(upper)
    cols = []
    for i in range(m.dim_state):
        coeffs = bernstein_coefficients(difference_table(m, i, upper), upper)
        cols.append([float(scale * c) for c in coeffs.ravel()])
    return EnsembleProfile(np.array(cols, dtype=float).T)
