"""Canned experiments: Bloch pi/2 rotation, pendulum ensemble, output-moment demo.

Each scenario is driven by a :class:`ScenarioConfig`, which round-trips
through YAML. Presets live in :data:`PRESETS`; an external config may name a
preset under ``preset:`` and override any subset of its keys.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import io
from .controller import (
    FeedbackLaw,
    QuadraticLyapunov,
    bloch_control_images,
    bloch_feedback,
    explicit_nonlinear_control,
    gradient_damping_control,
    singularity_monitor,
)
from .ensemble import (
    ControlSignal,
    IntegrationError,
    bloch_ensemble,
    lp_distance,
    pendulum_ensemble,
)
from .grid import EnsembleProfile, ParameterGrid
from .moment_dynamics import (
    BlochMomentChain,
    CoSimulation,
    PushforwardMomentSystem,
    constant_profile_moments,
    integrate_moment_chain,
    integrate_pushforward,
)
from .moments import MomentSequence, compute_output_moments, radical_distance

log = logging.getLogger(__name__)


class StallError(RuntimeError):
    """Feedback stalled on the singular set away from the target."""


@dataclass
class ScenarioConfig:
    name: str
    kind: str
    grid_points: int
    param_bounds: list
    moment_order: int
    dt: float
    T: float
    initial_profile: dict
    target_profile: dict
    controller: dict = field(default_factory=dict)
    closure: str = "from_ensemble"
    stride: int = 100
    abort_on_stall: bool = False
    output_dir: str | None = None

    def __post_init__(self):
        self.param_bounds = [list(map(float, b)) for b in self.param_bounds]
        for name in ("grid_points", "moment_order", "stride"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("dt", "T"):
            if not float(getattr(self, name)) > 0:
                raise ValueError(f"{name} must be positive")
        for a, b in self.param_bounds:
            if not b > a:
                raise ValueError(f"degenerate parameter interval [{a}, {b}]")
        if self.kind not in ("bloch", "nonlinear", "output_moment_demo"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ValueError(f"incomplete config: {exc}") from None

    def serialize(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def parse(cls, text: str) -> "ScenarioConfig":
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ValueError(f"malformed config: {exc}") from None
        if not isinstance(data, dict):
            raise ValueError("config must be a mapping of keys to values")
        preset = data.pop("preset", None)
        if preset is not None:
            base = preset_config(preset).to_dict()
            data = merge(base, data)
        return cls.from_dict(data)

    def replace(self, **overrides) -> "ScenarioConfig":
        return ScenarioConfig.from_dict(merge(self.to_dict(), overrides))


def merge(base: dict, override: dict) -> dict:
    """Key-by-key merge; nested dicts merge recursively."""
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


PRESETS = {
    "bloch-paper": dict(
        name="bloch-paper", kind="bloch", grid_points=300, param_bounds=[[0.9, 1.1]],
        moment_order=35, dt=1e-3, T=4.0,
        initial_profile={"name": "constant", "value": [0.0, 0.0, 1.0]},
        target_profile={"name": "constant", "value": [1.0, 0.0, 0.0]},
        controller={"kind": "gradient_damping", "gain": 1.0, "order": None, "u_max": None,
                    "singularity_threshold": 1e-9, "weight": 0.5, "start_order": 1,
                    "channels": ["u"]},
        closure="from_ensemble", stride=20,
    ),
    "nonlinear-paper": dict(
        name="nonlinear-paper", kind="nonlinear", grid_points=500, param_bounds=[[0.5, 1.0]],
        moment_order=50, dt=1e-3, T=12.5,
        initial_profile={"name": "constant", "value": [2.0, 1.0]},
        target_profile={"name": "constant", "value": [1.0, 0.0]},
        controller={"kind": "explicit_nonlinear", "gain": 1.0, "order": None, "u_max": None,
                    "singularity_threshold": 1e-9, "weight": 0.5, "start_order": 1,
                    "coefficients": [5.0, 1.0]},
        closure="from_ensemble", stride=50,
    ),
    "output-moment-demo": dict(
        name="output-moment-demo", kind="output_moment_demo", grid_points=1000,
        param_bounds=[[0.0, 1.0]], moment_order=10, dt=1.0, T=1.0,
        initial_profile={"name": "indicator", "interval": [0.0, 0.5]},
        target_profile={"name": "indicator", "interval": [0.5, 1.0]},
        stride=1,
    ),
}


def preset_config(name: str) -> ScenarioConfig:
    try:
        return ScenarioConfig.from_dict(copy.deepcopy(PRESETS[name]))
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None


def load_config(source: str) -> ScenarioConfig:
    """A preset name or a path to a YAML config file."""
    if source in PRESETS:
        return preset_config(source)
    path = Path(source)
    if not path.exists() and not path.suffix:
        raise ValueError(f"unknown preset {source!r}; available: {sorted(PRESETS)}")
    return ScenarioConfig.parse(path.read_text())


def profile_function(desc: dict):
    """Named profile -> callable beta -> state."""
    name = desc.get("name")
    if name == "constant":
        value = np.asarray(desc["value"], dtype=float)
        return lambda beta: value
    if name == "indicator":
        lo, hi = desc["interval"]
        return lambda beta: np.array([1.0 if lo <= beta[0] <= hi else 0.0])
    if name == "identity":
        return lambda beta: np.asarray(beta, dtype=float)
    raise ValueError(f"unknown profile function {name!r}")


def _sample(grid: ParameterGrid, desc: dict) -> EnsembleProfile:
    if desc.get("name") == "constant":
        return EnsembleProfile.constant(grid, desc["value"])
    return EnsembleProfile.from_function(grid, profile_function(desc))


def _target_moments(cfg: ScenarioConfig, grid: ParameterGrid, order: int) -> MomentSequence:
    desc = cfg.target_profile
    if desc.get("name") != "constant":
        raise ValueError("feedback scenarios need a constant target profile")
    return constant_profile_moments(desc["value"], tuple(cfg.param_bounds[0]), order)


def _lyapunov(cfg: ScenarioConfig, target: MomentSequence) -> QuadraticLyapunov:
    c = cfg.controller
    # controller order defaults to the scenario truncation order
    order = c.get("order")
    order = cfg.moment_order if order is None else int(order)
    if order > cfg.moment_order:
        raise ValueError(f"controller order {order} exceeds moment_order {cfg.moment_order}")
    return QuadraticLyapunov(target, order,
                             weights=float(c.get("weight", 1.0)),
                             start_order=int(c.get("start_order", 0)))


def _law(cfg: ScenarioConfig, L: QuadraticLyapunov) -> FeedbackLaw:
    c = cfg.controller
    return FeedbackLaw(
        kind=c.get("kind", "gradient_damping"),
        lyapunov=L,
        gain=float(c.get("gain", 1.0)),
        coefficients=tuple(float(x) for x in c.get("coefficients", (5.0, 1.0))),
        u_max=None if c.get("u_max") is None else float(c["u_max"]),
        singularity_threshold=float(c.get("singularity_threshold", 1e-9)),
    )


@dataclass
class ScenarioResult:
    name: str
    final_sup_error: float
    V_times: np.ndarray
    V_trace: np.ndarray
    traces: object
    grid: ParameterGrid
    extras: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    config: ScenarioConfig | None = None
    moments: list = field(default_factory=list)

    @property
    def max_V_increase(self) -> float:
        return float(np.max(np.diff(self.V_trace), initial=0.0))


def emit_csv(record: ScenarioResult, out_dir) -> dict:
    """Write the CSV set of a feedback run and return the manifest (name -> path)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces, grid = record.traces, record.grid
    files = {
        "trajectory": io.write_trajectory_csv(traces.times, traces.ensemble_states,
                                              traces.controls, grid, out / "trajectory.csv"),
        "moments": io.write_moment_trace_csv(traces.times, record.moments, out / "moments.csv"),
        "controls": io.write_series_csv(
            ["time"] + [f"u_{i + 1}" for i in range(len(traces.controls[0]))],
            ([t] + list(u) for t, u in zip(traces.times, traces.controls)),
            out / "controls.csv"),
        "lyapunov": io.write_series_csv(["time", "V"], zip(record.V_times, record.V_trace),
                                        out / "lyapunov.csv"),
        "final_profile": io.write_profile_csv(
            grid, EnsembleProfile(traces.ensemble_states[-1]), out / "final_profile.csv"),
    }
    summary = {k: v for k, v in record.extras.items()
               if isinstance(v, (int, float, str, type(None)))}
    summary["final_sup_error"] = record.final_sup_error
    summary["scenario"] = record.name
    if record.config is not None:
        files["config"] = out / "config.yaml"
        files["config"].write_text(record.config.serialize())
    files["manifest"] = io.write_manifest(out, files, {"summary": summary})
    return files


def run_bloch(cfg: ScenarioConfig) -> ScenarioResult:
    """Co-simulate the Bloch ensemble and its moment chain under moment feedback."""
    a, b = cfg.param_bounds[0]
    grid = ParameterGrid.uniform([(a, b)], cfg.grid_points)
    ens = bloch_ensemble(grid)
    N = cfg.moment_order
    p0 = _sample(grid, cfg.initial_profile)
    target = _target_moments(cfg, grid, N + 1)
    target_state = np.asarray(cfg.target_profile["value"], dtype=float)
    L = _lyapunov(cfg, target)
    law = _law(cfg, L)
    channels = tuple(cfg.controller.get("channels", ["u"]))
    signal = ControlSignal.feedback(bloch_feedback(law, channels), N + 1)
    chain = BlochMomentChain.from_profile(p0, grid, N, cfg.closure)
    co = CoSimulation(ens, p0)
    traces = integrate_moment_chain(chain, signal, cfg.dt, cfg.T, co_ensemble=co,
                                    stride=cfg.stride)
    seqs = [MomentSequence(1, N + 1, m) for m in traces.moments]
    V = np.array([L.value(s) for s in seqs])
    stall_time = None
    for t, s in zip(traces.times, seqs):
        status = singularity_monitor(law, s, bloch_control_images(s, L.order)[:1])
        if not status.ok:
            stall_time = t
            break
    norms0 = np.linalg.norm(p0.states, axis=1)
    drift = max(float(np.max(np.abs(np.linalg.norm(X, axis=1) - norms0)))
                for X in traces.ensemble_states)
    final = traces.ensemble_states[-1]
    sup_err = float(np.max(np.linalg.norm(final - target_state, axis=1)))
    gap = max(float(np.max(np.abs(cm[: N + 1] - em[: N + 1])))
              for cm, em in zip(traces.moments, traces.ensemble_moments))
    extras = {"norm_drift": drift, "stall_time": stall_time, "commuting_gap": gap,
              "final_V": float(V[-1])}
    result = ScenarioResult(cfg.name, sup_err, np.array(traces.times), V, traces, grid, extras,
                            config=cfg, moments=seqs)
    if stall_time is not None:
        log.warning("feedback stalled on the singular set from t=%.4g (V=%.3g)",
                    stall_time, V[-1])
    if cfg.output_dir:
        result.files = emit_csv(result, cfg.output_dir)
    if stall_time is not None and cfg.abort_on_stall:
        raise StallError(f"feedback stalled at t={stall_time:.4g} with V={V[-1]:.3g}")
    return result


def run_nonlinear(cfg: ScenarioConfig) -> ScenarioResult:
    """Pendulum ensemble under the explicit linear moment feedback."""
    a, b = cfg.param_bounds[0]
    grid = ParameterGrid.uniform([(a, b)], cfg.grid_points)
    ens = pendulum_ensemble(grid)
    N = cfg.moment_order
    p0 = _sample(grid, cfg.initial_profile)
    target = _target_moments(cfg, grid, N)
    target_state = np.asarray(cfg.target_profile["value"], dtype=float)
    L = _lyapunov(cfg, target)
    law = _law(cfg, L)

    if law.kind == "explicit_nonlinear":
        def fb(m, t):
            e = MomentSequence(1, m.max_order, m.values - target.values[: m.values.shape[0]])
            return [explicit_nonlinear_control(law, e)]
    else:
        def fb(m, t):
            # moment image of the control field (0, beta): rows k -> (0, int beta^{k+1})
            g = constant_profile_moments([0.0, 1.0], (a, b), N + 1).values[1:]
            return gradient_damping_control(law, m, None, [g])

    sys = PushforwardMomentSystem(ens, N)
    traces = integrate_pushforward(sys, p0, ControlSignal.feedback(fb, N), cfg.dt, cfg.T,
                                   stride=cfg.stride)
    seqs = [MomentSequence(1, N, m) for m in traces.moments]
    V = np.array([L.value(s) for s in seqs])
    errs = [float(np.max(np.linalg.norm(X - target_state, axis=1)))
            for X in traces.ensemble_states]
    below = [t for t, e in zip(traces.times, errs) if e < 0.1]
    gap = max(float(np.max(np.abs(cm - em)))
              for cm, em in zip(traces.moments, traces.ensemble_moments))
    extras = {"first_time_below_0.1": below[0] if below else None,
              "commuting_gap": gap, "final_V": float(V[-1]),
              "final_control": float(traces.controls[-1][0])}
    result = ScenarioResult(cfg.name, errs[-1], np.array(traces.times), V, traces, grid, extras,
                            config=cfg, moments=seqs)
    result.extras["sup_error_trace"] = np.array(errs)
    if cfg.output_dir:
        result.files = emit_csv(result, cfg.output_dir)
    return result


@dataclass
class OutputMomentReport:
    first: MomentSequence
    second: MomentSequence
    radical_distance: float
    l2_distance: float
    files: dict = field(default_factory=dict)


def run_output_moment_demo(cfg: ScenarioConfig) -> OutputMomentReport:
    """Two profiles, their output moments, radical distance and L2 distance."""
    grid = ParameterGrid.uniform([tuple(b) for b in cfg.param_bounds], cfg.grid_points)
    p1 = _sample(grid, cfg.initial_profile)
    p2 = _sample(grid, cfg.target_profile)
    m1 = compute_output_moments(p1, grid, cfg.moment_order)
    m2 = compute_output_moments(p2, grid, cfg.moment_order)
    report = OutputMomentReport(m1, m2, radical_distance(m1, m2), lp_distance(p1, p2, grid, 2.0))
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        header = [f"k_{j + 1}" for j in range(m1.dim_param)] + ["first", "second"]
        rows = (list(k) + [a, b] for k, a, b in zip(m1.indices, m1.values[:, 0], m2.values[:, 0]))
        files = {"output_moments": io.write_series_csv(header, rows, out / "output_moments.csv")}
        files["manifest"] = io.write_manifest(out, files, {"summary": {
            "scenario": cfg.name, "radical_distance": report.radical_distance,
            "l2_distance": report.l2_distance}})
        (out / "config.yaml").write_text(cfg.serialize())
        report.files = files
    return report


RUNNERS = {"bloch": run_bloch, "nonlinear": run_nonlinear,
           "output_moment_demo": run_output_moment_demo}


def run(cfg: ScenarioConfig):
    return RUNNERS[cfg.kind](cfg)


__all__ = [
    "IntegrationError", "PRESETS", "ScenarioConfig", "ScenarioResult", "OutputMomentReport",
    "StallError", "emit_csv", "load_config", "preset_config", "run", "run_bloch", "run_nonlinear",
    "run_output_moment_demo",
]
