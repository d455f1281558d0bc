"""Parallel SQP for graph-structured NLPs via overlapping decomposition."""

from .errors import (
    AssemblyError,
    CompositionError,
    DegenerateSubdomainError,
    EvaluationError,
    FogdError,
    InputValidationError,
    InsufficientDataError,
    LineSearchError,
    ModificationError,
    NonDescentError,
    SolverError,
    SubproblemRegularityError,
)
from .graph import (
    Graph,
    NodeSet,
    OverlapDecomposition,
    bhop_neighborhood,
    build_decomposition,
    grid_graph,
    strip_partition,
)
from .blocks import (
    KktFactorization,
    KktSystem,
    NodeBlockMatrix,
    NodeBlockVector,
    kkt_assemble,
)
from .model import (
    EvaluationSnapshot,
    GsNlpModel,
    NodeFunctions,
    modify_hessian,
    toy_chain_model,
    toy_graph_model,
)
from .engine import (
    SubSolution,
    Subproblem,
    assemble_subproblem,
    boundary_exact_parameters,
    compose,
    decompose,
    exact_newton_direction,
    ogd_direction,
    solve_subproblem,
)
from .driver import (
    FogdConfig,
    FogdResult,
    IterateTrace,
    armijo_linesearch,
    estimate_linear_rate,
    exact_sqp_reference,
    merit_gradient,
    merit_value,
    run_fogd,
)
from .pde import PdeConfig, build_pde_model
from .diagnostics import (
    DecayCurve,
    RegularityReport,
    descent_margin,
    error_vs_overlap,
    kkt_inverse_decay,
    regularity_report,
)
from .cli import ExperimentSpec, main, run_diagnostics, run_experiment

__version__ = "0.1.0"
