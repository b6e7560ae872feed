"""Stability and performance workbench for networked quantized control.

Exact discretization of stochastic sampled-data loops, polytopic
envelope construction, linear matrix inequality certificates for
mean-square stability and disturbance attenuation, and Monte Carlo
validation of the certified bounds.
"""

__version__ = "0.1.0"

from .errors import (
    CertificateInvalidError,
    ConfigError,
    ContainmentViolationError,
    DimensionError,
    DomainError,
    HorizonTooShortError,
    IllConditionedDecompositionError,
    NqcsError,
    TightnessNotAchievedError,
)
from .linalg import matexp, matexp_integral
from .model import (
    ClosedLoopRealization,
    ControllerModel,
    NetworkConfig,
    PlantModel,
    ProtocolSpec,
    QuantizerConfig,
    SystemDims,
    TimingRegion,
    build_realization,
)
from .timing import (
    PiecewiseTimingDistribution,
    UniformTimingDistribution,
    make_distribution,
)
from .overapprox import (
    ContainmentReport,
    PolytopicModel,
    build_polytopic_model,
    refine_until_tight,
    verify_containment,
)
from .lmi import (
    FixedParams,
    LmiCertificate,
    LmiProblem,
    assemble_periodic,
    assemble_quadratic,
    derive_certificate,
    tod_q_matrices,
)
from .sdp import (
    AffineConstraintSystem,
    SolveOptions,
    SolveOutcome,
    solve_feasibility,
    verify_outcome,
)
from .sim import (
    EnsembleStatistics,
    SimulationRun,
    check_emsiss_bound,
    check_hinf_sum,
    run_ensemble,
    simulate_run,
    write_trace_csv,
)
from .config import WorkbenchConfig, load_config
from .pipeline import analyze, simulate_and_check, sweep_tradeoff
