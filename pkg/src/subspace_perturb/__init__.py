"""Privacy-preserving distributed optimization by perturbing the dual
variables in their non-convergent subspace."""
from ._backend import BACKEND
from .graph import (
    ConstraintMatrices,
    Graph,
    build_constraint_matrices,
    complete_graph,
    from_edges,
    generate_geometric_graph,
    path_graph,
)
from .harness import ExperimentConfig, fit_tail_slope, run_experiment
from .optimizers import (
    DivergenceError,
    OptimizerState,
    StepConfig,
    admm_round,
    averaged_pdmm_round,
    dual_ascent_round,
    pdmm_round,
    run,
)
from .privacy import (
    AdversaryModel,
    LeakageReport,
    consensus_lower_bound,
    dp_baseline_consensus,
    eavesdrop_reconstruct,
    estimate_mi,
    honest_components,
    leakage_experiment,
    prop2_bound,
)
from .problems import ProblemInstance, centralized_solution, make_problem
from .subspace import convergent_basis, optimal_dual, project, sample_dual_init
from .trace import Trace

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConstraintMatrices", "Graph", "build_constraint_matrices", "complete_graph",
    "from_edges", "generate_geometric_graph", "path_graph", "ExperimentConfig", "fit_tail_slope",
    "run_experiment", "DivergenceError", "OptimizerState", "StepConfig", "admm_round",
    "averaged_pdmm_round", "dual_ascent_round", "pdmm_round", "run", "AdversaryModel",
    "LeakageReport", "consensus_lower_bound", "dp_baseline_consensus", "eavesdrop_reconstruct",
    "estimate_mi", "honest_components", "leakage_experiment", "prop2_bound", "ProblemInstance",
    "centralized_solution", "make_problem", "convergent_basis", "optimal_dual", "project",
    "sample_dual_init", "Trace",
]
