"""Structure-preserving multirate time integration for slow/fast mechanical systems."""

from .analysis import (
    ConvergenceTable,
    EnergySeries,
    ErrorNorms,
    StabilityReport,
    angular_momentum_series,
    convergence_study,
    empirical_stability_probe,
    energy_series,
    error_norms,
    propagation_matrix,
    stability_report,
)
from .discretization import (
    MacroStepUnknowns,
    discrete_fast_potential,
    discrete_kinetic,
    discrete_lagrangian,
    discrete_momenta,
    discrete_slow_potential,
    grad_discrete_lagrangian,
    interp_slow,
    interval_momenta,
)
from .errors import (
    AbortedStepError,
    AlignmentError,
    ConfigurationError,
    DivergenceError,
    EvaluationError,
    IntegrationError,
    MultirateError,
)
from .model import (
    MultirateSystem,
    QuadratureSpec,
    SlowPlacement,
    State,
    TimeGrid,
    Trajectory,
    build_time_grid,
    momenta_from_velocities,
    validate_system,
)
from .schemes import (
    PQSchemeKind,
    PQStepResult,
    integrate_pq,
    pq_step,
    pq_step_midmid,
    pq_step_trapmid,
    pq_step_traptrap,
    quad_to_scheme_kind,
    scheme_kind_to_quad,
)
from .solver import (
    IntegrationStats,
    IntegratorMode,
    JacobianMode,
    MacroStep,
    SolverConfig,
    StepStats,
    TrajectoryCertificate,
    del_jacobian,
    del_residual,
    explicit_macro_step,
    initial_step,
    integrate,
    macro_flow_map,
    macro_step,
    verify_trajectory,
)
from .systems import FpuConfig, SpringRingConfig, build_fpu, build_spring_ring

__version__ = "0.1.0"
