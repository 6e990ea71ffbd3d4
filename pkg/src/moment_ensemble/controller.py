"""Lyapunov moment feedback.

With e = m - m_F and V = L(e) a weighted sum of squared moment errors, the
moment system gives

    dV/dt = grad L(e) . (f_bar(m) + sum_i u_i g_bar_i(m)),

where f_bar, g_bar_i are the moment images of the drift and control fields.
Gradient damping picks u_i = -gain <grad L(e), g_bar_i(m)>, which makes the
control contribution to dV/dt non-positive.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import OMEGA_X, OMEGA_Y
from .moments import MomentSequence
from .multiindex import count_multiindices

KINDS = ("gradient_damping", "explicit_bloch", "explicit_nonlinear")


@dataclass(eq=False)
class QuadraticLyapunov:
    """V = sum over start_order <= |j| <= order of w_|j| * |m_j - target_j|^2.

    ``weights`` is indexed by total order (length order + 1); default all 1.
    """

    target: MomentSequence
    order: int
    weights: np.ndarray | None = None
    start_order: int = 0

    def __post_init__(self):
        if self.target.max_order < self.order:
            raise ValueError("target is truncated below the Lyapunov order")
        if self.weights is None:
            self.weights = np.ones(self.order + 1)
        self.weights = np.broadcast_to(np.asarray(self.weights, dtype=float),
                                       (self.order + 1,)).copy()
        if np.any(self.weights <= 0):
            raise ValueError("Lyapunov weights must be positive")
        self._rows = count_multiindices(self.target.dim_param, self.order)
        orders = self.target.orders()[: self._rows]
        w = self.weights[orders]
        w[orders < self.start_order] = 0.0
        self._row_weights = w[:, None]

    def _check(self, m: MomentSequence) -> None:
        if m.dim_param != self.target.dim_param or m.dim_state != self.target.dim_state:
            raise ValueError("moment sequence does not match the Lyapunov target")
        if m.max_order < self.order:
            raise ValueError(f"need moments through order {self.order}, have {m.max_order}")

    def error(self, m: MomentSequence) -> np.ndarray:
        """e = m - m_F on rows with |j| <= order, shape (rows, n)."""
        self._check(m)
        return np.asarray(m.values[: self._rows] - self.target.values[: self._rows], dtype=float)

    def value(self, m: MomentSequence) -> float:
        e = self.error(m)
        return float((self._row_weights * e * e).sum())

    def gradient(self, m: MomentSequence) -> np.ndarray:
        return 2.0 * self._row_weights * self.error(m)


def lyapunov_value(L: QuadraticLyapunov, m: MomentSequence) -> float:
    return L.value(m)


@dataclass(eq=False)
class FeedbackLaw:
    kind: str
    lyapunov: QuadraticLyapunov
    gain: float = 1.0
    coefficients: tuple = (5.0, 1.0)
    u_max: float | None = None
    singularity_threshold: float = 1e-9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown feedback kind {self.kind!r}")
        if self.kind == "gradient_damping" and not self.gain > 0:
            raise ValueError("gain must be positive")
        if self.u_max is not None and not self.u_max > 0:
            raise ValueError("u_max must be positive")

    def saturate(self, u: np.ndarray) -> np.ndarray:
        if self.u_max is None:
            return u
        return np.clip(u, -self.u_max, self.u_max)


def _image_rows(law: FeedbackLaw, image) -> np.ndarray:
    vals = image.values if isinstance(image, MomentSequence) else np.asarray(image)
    return np.asarray(vals[: law.lyapunov._rows], dtype=float)


def damping_products(law: FeedbackLaw, m: MomentSequence, bar_g) -> np.ndarray:
    """<grad L(e), g_bar_i(m)> for each control field."""
    grad = law.lyapunov.gradient(m)
    return np.array([float((grad * _image_rows(law, g)).sum()) for g in bar_g])


def gradient_damping_control(law: FeedbackLaw, m: MomentSequence, bar_f, bar_g) -> np.ndarray:
    """u_i = -gain <grad L(e), g_bar_i(m)>.

    ``bar_f`` does not enter the control; it is accepted so callers can pass
    the full moment image of the system. For drift-free systems the
    resulting dV/dt is -gain * sum_i <grad L, g_bar_i>^2 <= 0.
    """
    return law.saturate(-law.gain * damping_products(law, m, bar_g))


def lyapunov_rate(law: FeedbackLaw, m: MomentSequence, bar_f, bar_g, u) -> float:
    """dV/dt = grad L . (f_bar + sum_i u_i g_bar_i)."""
    grad = law.lyapunov.gradient(m)
    rate = 0.0 if bar_f is None else float((grad * _image_rows(law, bar_f)).sum())
    return rate + float(np.dot(u, damping_products(law, m, bar_g)))


def bloch_control_images(m: MomentSequence, order: int) -> list[np.ndarray]:
    """Moment images of the Bloch control fields: rows j = 0..order hold
    Omega_y m_{j+1} (u channel) and Omega_x m_{j+1} (v channel)."""
    if m.max_order < order + 1:
        raise ValueError(f"need moments through order {order + 1}")
    shifted = np.asarray(m.values[1: order + 2], dtype=float)
    return [shifted @ OMEGA_Y.T, shifted @ OMEGA_X.T]


def explicit_bloch_control(law: FeedbackLaw, m: MomentSequence) -> np.ndarray:
    """(u, v) with u = -sum_{j=1}^N (e_{1,j} m_{3,j+1} - e_{3,j} m_{1,j+1}), v = 0."""
    N = law.lyapunov.order
    e = law.lyapunov.error(m)
    mv = np.asarray(m.values, dtype=float)
    u = 0.0
    for j in range(1, N + 1):
        u -= e[j, 0] * mv[j + 1, 2] - e[j, 2] * mv[j + 1, 0]
    return law.saturate(np.array([u, 0.0]))


def explicit_nonlinear_control(law: FeedbackLaw, e: MomentSequence) -> float:
    """u = -sum_{1 <= |j| <= N} (c1 e_{1,j} + c2 e_{2,j})."""
    c1, c2 = law.coefficients
    N = law.lyapunov.order
    rows = count_multiindices(e.dim_param, N)
    vals = np.asarray(e.values[:rows], dtype=float)
    orders = e.orders()[:rows]
    sel = vals[orders >= 1]
    u = -(c1 * sel[:, 0].sum() + c2 * sel[:, 1].sum())
    return float(law.saturate(np.array([u]))[0])


@dataclass
class SingularityStatus:
    ok: bool
    norm: float
    error_norm: float

    @property
    def label(self) -> str:
        return "ok" if self.ok else f"near_singular({self.norm:.3g})"


def singularity_monitor(law: FeedbackLaw, m: MomentSequence, bar_g,
                        threshold: float | None = None) -> SingularityStatus:
    """Flag a stall: the damping products vanish while the error does not."""
    threshold = law.singularity_threshold if threshold is None else threshold
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    norm = float(np.linalg.norm(damping_products(law, m, bar_g)))
    err = float(np.linalg.norm(law.lyapunov.error(m)))
    return SingularityStatus(not (norm < threshold and err > threshold), norm, err)


def bloch_feedback(law: FeedbackLaw, channels=("u",)):
    """Feedback callable ``(m, t) -> (u, v)`` for the Bloch moment chain.

    Gradient damping acts on the listed channels; the others are held at 0.
    With ``channels=("u",)`` this is the y-rotation law.
    """
    N = law.lyapunov.order

    def fn(m: MomentSequence, t: float) -> np.ndarray:
        if law.kind == "explicit_bloch":
            return explicit_bloch_control(law, m)
        images = bloch_control_images(m, N)
        active = [images[0] if c == "u" else images[1] for c in channels]
        u_active = gradient_damping_control(law, m, None, active)
        out = np.zeros(2)
        for c, val in zip(channels, u_active):
            out[0 if c == "u" else 1] = val
        return out

    return fn
