"""stochwave: spectral Galerkin / backward Euler simulation of a damped
stochastic wave equation, with long-time statistics and convergence studies.
"""

__version__ = "0.1.0"

from .errors import (
    AliasingError,
    ConfigurationError,
    ShapeError,
    SolverError,
)
from .spectral import (
    GridField,
    PhaseState,
    SpectralField,
    eigenvalue,
    eigenvalues,
    from_grid,
    phase_norm,
    project,
    smooth_state,
    sobolev_norm,
    to_grid,
)
from .noise import (
    IncrementPath,
    NoiseSpec,
    build_power_law_q,
    coarsen_path,
    sample_increment,
    sample_increment_path,
)
from .nonlinearity import (
    NonlinearityModel,
    apply_F,
    audit_assumptions,
    builtin_models,
    make_model,
)
from .integrator import (
    ExactLinearSampler,
    SchemeConfig,
    SolverOptions,
    StepRecord,
    backward_euler_step,
    exact_linear_step,
    implicit_solve,
    linear_propagator_apply,
    simulate_path,
)
from .ergodics import (
    CpGammaFunctional,
    LyapunovParams,
    TimeAverageAccumulator,
    coupled_contraction,
    d_p_gamma,
    lyapunov_h1,
    lyapunov_h2,
    make_observable,
    wasserstein1_1d,
)
