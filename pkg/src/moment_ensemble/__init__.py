"""Moment-based analysis and feedback control of parameterized ensembles."""
from .controller import (
    FeedbackLaw,
    QuadraticLyapunov,
    explicit_bloch_control,
    explicit_nonlinear_control,
    gradient_damping_control,
    lyapunov_value,
    singularity_monitor,
)
from .ensemble import (
    ControlAffineEnsemble,
    ControlSignal,
    IntegrationError,
    Trajectory,
    bloch_ensemble,
    pendulum_ensemble,
    simulate,
    step,
)
from .grid import EnsembleProfile, ParameterGrid
from .moment_dynamics import (
    BlochMomentChain,
    CoSimulation,
    PushforwardMomentSystem,
    bloch_moment_rhs,
    integrate_moment_chain,
    integrate_pushforward,
    pushforward_rhs,
)
from .moments import (
    HausdorffReport,
    bernstein_basis,
    MomentSequence,
    TruncationError,
    check_hausdorff_l1,
    check_hausdorff_l2,
    compute_ensemble_moments,
    compute_output_moments,
    difference_operator,
    invert_moments,
    radical_distance,
    rescale_moments,
)
from .multiindex import MultiIndex, enumerate_multiindices
from .scenarios import PRESETS, ScenarioConfig, StallError, emit_csv, load_config, run

__version__ = "0.1.0"
