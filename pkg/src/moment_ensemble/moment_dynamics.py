"""Moment-space dynamics.

For the Bloch ensemble the moments obey a closed chain,

    d/dt m_k = (u Omega_y + v Omega_x) m_{k+1},

so a truncation at order N+1 only needs one extra moment m_{N+2} supplied by
a closure rule. For a generic control-affine ensemble the moment derivative
is the moment sequence of the vector fields evaluated on the current
profile, which is not closed in moment space; :func:`pushforward_rhs`
computes it from the profile.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import (
    OMEGA_X,
    OMEGA_Y,
    ControlAffineEnsemble,
    ControlSignal,
    IntegrationError,
    n_steps,
    step,
)
from .grid import EnsembleProfile, ParameterGrid
from .moments import MomentSequence, compute_ensemble_moments

CLOSURES = ("from_ensemble", "hold_last", "zero")


@dataclass(eq=False)
class BlochMomentChain:
    """Moments m_0..m_{N+1} (rows) of a Bloch ensemble on ``interval``."""

    N: int
    interval: tuple
    moments: np.ndarray
    closure: str = "hold_last"

    def __post_init__(self):
        if self.closure not in CLOSURES:
            raise ValueError(f"unknown closure {self.closure!r}; pick one of {CLOSURES}")
        self.moments = np.array(self.moments, dtype=float)
        if self.moments.shape != (self.N + 2, 3):
            raise ValueError(f"expected moments of shape {(self.N + 2, 3)}, got {self.moments.shape}")
        if not np.all(np.isfinite(self.moments)):
            raise ValueError("chain moments must be finite")

    @classmethod
    def from_profile(cls, profile: EnsembleProfile, grid: ParameterGrid, N: int,
                     closure: str = "hold_last") -> "BlochMomentChain":
        m = compute_ensemble_moments(profile, grid, N + 1)
        return cls(N, tuple(grid.bounds[0]), m.values, closure)

    @classmethod
    def constant(cls, value, interval, N: int, closure: str = "hold_last") -> "BlochMomentChain":
        """Chain of a constant profile, from the exact monomial integrals."""
        return cls(N, tuple(interval), constant_profile_moments(value, interval, N + 1).values,
                   closure)

    def as_sequence(self) -> MomentSequence:
        return MomentSequence(1, self.N + 1, self.moments)


def constant_profile_moments(value, interval, max_order: int) -> MomentSequence:
    """Exact moments of a constant profile on [a, b]: value (b^{k+1} - a^{k+1}) / (k+1)."""
    a, b = interval
    value = np.atleast_1d(np.asarray(value, dtype=float))
    k = np.arange(max_order + 1)
    scalar = (b ** (k + 1) - a ** (k + 1)) / (k + 1)
    return MomentSequence(1, max_order, scalar[:, None] * value[None, :])


def _closure_moment(closure: str, moments: np.ndarray, injected) -> np.ndarray:
    if closure == "hold_last":
        return moments[-1]
    if closure == "zero":
        return np.zeros(3)
    if injected is None:
        raise ValueError("from_ensemble closure needs an injected m_{N+2}")
    return np.asarray(injected, dtype=float)


def bloch_moment_rhs(chain: BlochMomentChain, u: float, v: float, injected=None,
                     moments: np.ndarray | None = None) -> np.ndarray:
    """d/dt m_k for k = 0..N+1; ``moments`` overrides the chain state (RK stages)."""
    m = chain.moments if moments is None else moments
    A = u * OMEGA_Y + v * OMEGA_X
    top = _closure_moment(chain.closure, m, injected)
    shifted = np.vstack([m[1:], top[None, :]])
    return shifted @ A.T


@dataclass(eq=False)
class PushforwardMomentSystem:
    ensemble: ControlAffineEnsemble
    max_order: int


def pushforward_rhs(sys: PushforwardMomentSystem, profile: EnsembleProfile, u) -> MomentSequence:
    """Moments of f(x, .) + sum_i u_i g_i(x, .) on the current profile."""
    ens = sys.ensemble
    if profile.size != ens.grid.size or profile.n != ens.n:
        raise ValueError("profile does not match the ensemble dimensions")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (ens.l,):
        raise ValueError(f"expected {ens.l} controls, got shape {u.shape}")
    X = profile.states
    out = compute_ensemble_moments(EnsembleProfile(ens.drift_field(X)), ens.grid, sys.max_order)
    values = out.values
    for ui, G in zip(u, ens.control_fields(X)):
        values = values + ui * compute_ensemble_moments(
            EnsembleProfile(G), ens.grid, sys.max_order).values
    return MomentSequence(out.dim_param, out.max_order, values)


@dataclass
class MomentTrajectory:
    times: list = field(default_factory=list)
    moments: list = field(default_factory=list)
    controls: list = field(default_factory=list)
    # filled only when an ensemble is co-simulated
    ensemble_moments: list = field(default_factory=list)
    ensemble_states: list = field(default_factory=list)


@dataclass(eq=False)
class CoSimulation:
    """An ensemble advanced in lockstep with a moment chain."""

    ensemble: ControlAffineEnsemble
    profile: EnsembleProfile


def _hermite(q0, dq0, q1, dq1, dt: float, s: float) -> np.ndarray:
    s2, s3 = s * s, s * s * s
    return ((2 * s3 - 3 * s2 + 1) * q0 + (s3 - 2 * s2 + s) * dt * dq0
            + (-2 * s3 + 3 * s2) * q1 + (s3 - s2) * dt * dq1)


def _top_moment(ens: ControlAffineEnsemble, X: np.ndarray, u, order: int):
    """Moment of order ``order`` of the profile and of its time derivative."""
    grid = ens.grid
    w = grid.weights * grid.nodes[:, 0] ** order
    q = (w[:, None] * X).sum(axis=0)
    dq = (w[:, None] * ens.vector_field(X, u)).sum(axis=0)
    return q, dq


def integrate_moment_chain(chain: BlochMomentChain, signal: ControlSignal, dt: float, T: float,
                           co_ensemble: CoSimulation | None = None,
                           stride: int = 1) -> MomentTrajectory:
    """RK4 integration of the chain with zero-order-hold control.

    Feedback signals are evaluated on the chain's own moments (orders up to
    ``signal.order``) and the resulting control drives both the chain and the
    co-simulated ensemble, if any. With ``from_ensemble`` closure the
    ensemble is stepped first; inside the step the closing moment m_{N+2} is
    read from the ensemble by cubic Hermite interpolation between the two
    step endpoints, which keeps the chain fourth-order accurate.
    """
    if chain.closure == "from_ensemble" and co_ensemble is None:
        raise ValueError("from_ensemble closure requires a co-simulated ensemble")
    if co_ensemble is not None and co_ensemble.ensemble.l != 2:
        raise ValueError("co-simulated Bloch ensemble must have controls (u, v)")
    steps = n_steps(T, dt)
    out = MomentTrajectory()
    m = chain.moments.copy()
    profile = co_ensemble.profile if co_ensemble is not None else None
    t = profile.time if profile is not None else 0.0
    top_order = chain.N + 2

    def control(t_now, m_now):
        seq = None
        if signal.kind == "feedback":
            order = min(signal.order or chain.N + 1, chain.N + 1)
            seq = MomentSequence(1, chain.N + 1, m_now).truncate(order)
        u = signal(t_now, seq)
        if u.shape != (2,):
            raise ValueError("Bloch chain controls are (u, v)")
        return u

    def record(t_now, m_now, u, prof):
        out.times.append(t_now)
        out.moments.append(m_now.copy())
        out.controls.append(u)
        if prof is not None:
            ens = co_ensemble.ensemble
            out.ensemble_moments.append(
                compute_ensemble_moments(prof, ens.grid, chain.N + 1).values)
            out.ensemble_states.append(prof.states.copy())

    for i in range(steps):
        u = control(t, m)
        if i % stride == 0:
            record(t, m, u, profile)
        inj = [None, None, None]
        if profile is not None:
            ens = co_ensemble.ensemble
            new_profile = step(ens, profile, u, dt)
            if chain.closure == "from_ensemble":
                q0, dq0 = _top_moment(ens, profile.states, u, top_order)
                q1, dq1 = _top_moment(ens, new_profile.states, u, top_order)
                inj = [q0, _hermite(q0, dq0, q1, dq1, dt, 0.5), q1]
            profile = new_profile

        def rhs(state, injected):
            return bloch_moment_rhs(chain, u[0], u[1], injected=injected, moments=state)

        k1 = rhs(m, inj[0])
        k2 = rhs(m + 0.5 * dt * k1, inj[1])
        k3 = rhs(m + 0.5 * dt * k2, inj[1])
        k4 = rhs(m + dt * k3, inj[2])
        m = m + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t + dt
        if not np.all(np.isfinite(m)):
            raise IntegrationError(f"moment chain blew up at t={t:.6g}")
    record(t, m, control(t, m), profile)
    chain.moments = m
    if co_ensemble is not None:
        co_ensemble.profile = profile
    return out


def integrate_pushforward(sys: PushforwardMomentSystem, profile0: EnsembleProfile,
                          signal: ControlSignal, dt: float, T: float,
                          stride: int = 1) -> MomentTrajectory:
    """Co-integrate an ensemble and its (unclosed) moment system.

    The pair (profile, moments) is advanced by one RK4 scheme; the moment
    stages are :func:`pushforward_rhs` evaluated on the matching profile
    stages. Feedback reads the integrated moments, and the same
    zero-order-hold control drives both.
    """
    ens = sys.ensemble
    steps = n_steps(T, dt)
    out = MomentTrajectory()
    X = profile0.states.copy()
    m = compute_ensemble_moments(profile0, ens.grid, sys.max_order).values
    t = profile0.time

    def control(t_now, m_now):
        seq = None
        if signal.kind == "feedback":
            seq = MomentSequence(1, sys.max_order, m_now).truncate(
                min(signal.order or sys.max_order, sys.max_order))
        return signal(t_now, seq)

    def record(t_now, X_now, m_now, u):
        out.times.append(t_now)
        out.moments.append(m_now.copy())
        out.controls.append(u)
        out.ensemble_states.append(X_now.copy())
        out.ensemble_moments.append(
            compute_ensemble_moments(EnsembleProfile(X_now), ens.grid, sys.max_order).values)

    def stage(Y, u):
        dX = ens.vector_field(Y, u)
        dm = compute_ensemble_moments(EnsembleProfile(dX), ens.grid, sys.max_order).values
        return dX, dm

    for i in range(steps):
        u = control(t, m)
        if i % stride == 0:
            record(t, X, m, u)
        k1 = stage(X, u)
        k2 = stage(X + 0.5 * dt * k1[0], u)
        k3 = stage(X + 0.5 * dt * k2[0], u)
        k4 = stage(X + dt * k3[0], u)
        X = X + (dt / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        m = m + (dt / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        t = t + dt
        bad = ~np.isfinite(X) | (np.abs(X) > 1e6)
        if bad.any():
            node = int(np.argwhere(bad)[0][0])
            raise IntegrationError(f"integration blow-up at node {node}, t={t:.6g}", node=node)
    record(t, X, m, control(t, m))
    return out
