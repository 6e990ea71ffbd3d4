"""Control-affine ensembles discretized over a parameter grid.

Each grid node beta_p carries its own copy of

    dx/dt = f(x, beta) + sum_i u_i(t) g_i(x, beta)

and all nodes share the same control u(t). Vector fields are evaluated for
the whole ensemble at once: a field is a callable ``(X, B) -> array`` with
``X`` of shape (P, n) and ``B`` of shape (P, d).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import EnsembleProfile, ParameterGrid
from .moments import MomentSequence, compute_ensemble_moments

log = logging.getLogger(__name__)

BLOWUP_LIMIT = 1e6
DEFAULT_DT = 1e-3

OMEGA_X = np.array([[0.0, 0.0, 0.0],
                    [0.0, 0.0, -1.0],
                    [0.0, 1.0, 0.0]])
OMEGA_Y = np.array([[0.0, 0.0, 1.0],
                    [0.0, 0.0, 0.0],
                    [-1.0, 0.0, 0.0]])

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


class IntegrationError(RuntimeError):
    """The ensemble state left the finite region (blow-up)."""

    def __init__(self, message: str, node: int | None = None):
        super().__init__(message)
        self.node = node


@dataclass(eq=False)
class ControlAffineEnsemble:
    n: int
    l: int
    grid: ParameterGrid
    drift: Field | None = None
    controls: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.controls) != self.l:
            raise ValueError(f"expected {self.l} control fields, got {len(self.controls)}")

    @property
    def betas(self) -> np.ndarray:
        return self.grid.nodes

    def _eval(self, fn: Field, X: np.ndarray) -> np.ndarray:
        out = np.asarray(fn(X, self.betas), dtype=float)
        if out.shape != X.shape:
            raise ValueError(f"vector field returned shape {out.shape}, expected {X.shape}")
        return out

    def drift_field(self, X: np.ndarray) -> np.ndarray:
        if self.drift is None:
            return np.zeros_like(X)
        return self._eval(self.drift, X)

    def control_fields(self, X: np.ndarray) -> list[np.ndarray]:
        return [self._eval(g, X) for g in self.controls]

    def vector_field(self, X: np.ndarray, u: Sequence[float]) -> np.ndarray:
        out = self.drift_field(X)
        for ui, g in zip(u, self.controls):
            if ui != 0.0:
                out = out + ui * self._eval(g, X)
        return out


@dataclass
class ControlSignal:
    """Either moment feedback ``fn(moments, t)`` or open loop ``fn(t)``.

    For feedback, ``order`` is the truncation order of the ensemble moments
    handed to ``fn``.
    """

    kind: str
    fn: Callable
    order: int = 0

    def __post_init__(self):
        if self.kind not in ("feedback", "open_loop"):
            raise ValueError(f"unknown signal kind {self.kind!r}")

    @classmethod
    def feedback(cls, fn, order: int) -> "ControlSignal":
        return cls("feedback", fn, order)

    @classmethod
    def open_loop(cls, fn) -> "ControlSignal":
        return cls("open_loop", fn)

    @classmethod
    def zero(cls, l: int) -> "ControlSignal":
        return cls("open_loop", lambda t: np.zeros(l))

    def __call__(self, t: float, moments: MomentSequence | None = None) -> np.ndarray:
        if self.kind == "feedback":
            u = self.fn(moments, t)
        else:
            u = self.fn(t)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if not np.all(np.isfinite(u)):
            raise IntegrationError(f"control signal returned non-finite value {u} at t={t}")
        return u


def _guard(X: np.ndarray, t: float) -> None:
    bad = ~np.isfinite(X) | (np.abs(X) > BLOWUP_LIMIT)
    if bad.any():
        node = int(np.argwhere(bad)[0][0])
        raise IntegrationError(f"integration blow-up at node {node}, t={t:.6g}", node=node)


def rk4_increment(fn: Callable[[np.ndarray], np.ndarray], X: np.ndarray, dt: float) -> np.ndarray:
    k1 = fn(X)
    k2 = fn(X + 0.5 * dt * k1)
    k3 = fn(X + 0.5 * dt * k2)
    k4 = fn(X + dt * k3)
    return (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(ens: ControlAffineEnsemble, profile: EnsembleProfile, u, dt: float) -> EnsembleProfile:
    """One classical RK4 step with the control held constant over [t, t + dt]."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (ens.l,):
        raise ValueError(f"expected {ens.l} controls, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("control must be finite")
    X = profile.states
    X_new = X + rk4_increment(lambda Y: ens.vector_field(Y, u), X, dt)
    t_new = profile.time + dt
    _guard(X_new, t_new)
    return EnsembleProfile(X_new, t_new)


@dataclass
class Trajectory:
    """Time series sampled every ``stride`` steps (plus the final time)."""

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    controls: list = field(default_factory=list)
    moments: list = field(default_factory=list)
    observations: dict = field(default_factory=dict)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def n_steps(T: float, dt: float) -> int:
    if not T > 0 or not dt > 0:
        raise ValueError("T and dt must be positive")
    return max(1, int(round(T / dt)))


def simulate(ens: ControlAffineEnsemble, profile0: EnsembleProfile, signal: ControlSignal,
             dt: float, T: float, observers: dict | None = None, stride: int = 1,
             record_moments: bool = True) -> Trajectory:
    """Integrate the ensemble under ``signal`` from ``profile0.time`` to ``+T``.

    Feedback signals see the quadrature moments of the current profile at
    the signal's order, recomputed at every step; the resulting control is
    held over the step.
    """
    observers = observers or {}
    steps = n_steps(T, dt)
    traj = Trajectory(observations={name: [] for name in observers})
    profile = profile0

    def evaluate(p: EnsembleProfile):
        m = None
        if signal.kind == "feedback":
            m = compute_ensemble_moments(p, ens.grid, signal.order)
        return signal(p.time, m), m

    def record(p, u, m):
        traj.times.append(p.time)
        traj.states.append(p.states.copy())
        traj.controls.append(u)
        if record_moments:
            traj.moments.append(m)
        for name, obs in observers.items():
            traj.observations[name].append(obs(p, p.time))

    for i in range(steps):
        u, m = evaluate(profile)
        if i % stride == 0:
            record(profile, u, m)
        profile = step(ens, profile, u, dt)
    u, m = evaluate(profile)
    record(profile, u, m)
    return traj


def lp_distance(a: EnsembleProfile, b: EnsembleProfile, grid: ParameterGrid, p=2.0) -> float:
    """Quadrature L^p distance between two profiles (Euclidean norm pointwise)."""
    if a.states.shape != b.states.shape:
        raise ValueError(f"shape mismatch {a.states.shape} vs {b.states.shape}")
    if a.size != grid.size:
        raise ValueError("profiles do not live on this grid")
    pointwise = np.linalg.norm(np.asarray(a.states - b.states, dtype=float), axis=1)
    if np.isinf(p):
        return float(pointwise.max())
    if p < 1:
        raise ValueError("p must be >= 1")
    w = np.asarray(grid.weights, dtype=float)
    return float((w * pointwise ** p).sum() ** (1.0 / p))


def bloch_ensemble(grid: ParameterGrid) -> ControlAffineEnsemble:
    """Drift-free Bloch ensemble dM/dt = eps (u Omega_y + v Omega_x) M, eps the
    (1-D) grid parameter; controls are ordered (u, v)."""
    if grid.d != 1:
        raise ValueError("the Bloch ensemble has a scalar parameter")

    def g_u(X, B):
        return B * (X @ OMEGA_Y.T)

    def g_v(X, B):
        return B * (X @ OMEGA_X.T)

    return ControlAffineEnsemble(n=3, l=2, grid=grid, drift=None, controls=[g_u, g_v])


def pendulum_ensemble(grid: ParameterGrid) -> ControlAffineEnsemble:
    """Damped-pendulum ensemble dz/dt = beta (y, -y - sin x) + (0, beta) u."""
    if grid.d != 1:
        raise ValueError("the pendulum ensemble has a scalar parameter")

    def drift(X, B):
        b = B[:, 0]
        return np.column_stack([b * X[:, 1], b * (-X[:, 1] - np.sin(X[:, 0]))])

    def g(X, B):
        return np.column_stack([np.zeros(len(B)), B[:, 0]])

    return ControlAffineEnsemble(n=2, l=1, grid=grid, drift=drift, controls=[g])
