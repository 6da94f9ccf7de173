from .harness import (
    DEFAULT_HYPER,
    ConditionDiagnostics,
    ConvergenceReport,
    PairedReport,
    check_convergence_conditions,
    compare_euclidean_baseline,
    map_seeds,
    run_benchmark,
    run_stacked,
    running_min_drop,
)
from .problems import (
    BenchProblem,
    ObliqueDiagProblem,
    ProcrustesProblem,
    RayleighProblem,
    make_problem,
    oblique_diag_problem,
    procrustes_problem,
    rayleigh_problem,
    stack_problems,
)

__all__ = [
    "DEFAULT_HYPER",
    "ConditionDiagnostics",
    "ConvergenceReport",
    "PairedReport",
    "check_convergence_conditions",
    "compare_euclidean_baseline",
    "map_seeds",
    "run_benchmark",
    "run_stacked",
    "running_min_drop",
    "BenchProblem",
    "ObliqueDiagProblem",
    "ProcrustesProblem",
    "RayleighProblem",
    "make_problem",
    "oblique_diag_problem",
    "procrustes_problem",
    "rayleigh_problem",
    "stack_problems",
]
