"""Least-squares polynomial collocation for linear differential-algebraic
equations, including higher-index problems."""

from .numkit import (
    NodeFamily,
    RankDeficientError,
    gauss_legendre_rule,
    lagrange_eval,
    lagrange_gram,
    make_nodes,
    min_singular_value,
    solve_lls,
)
from .meshspace import AnsatzSpace, Partition, PwPolySolution, uniform_partition
from .problems import LinearDAEProblem, get_problem, problem_names
from .collocation import (
    CollocationScheme,
    IndexRegimeWarning,
    Method,
    SchemeError,
    SolveReport,
    Weighting,
    assemble,
    make_scheme,
    solve,
    space_for,
)
from .analysis import (
    ErrorReport,
    StudyResult,
    doubling,
    error_norms,
    observed_order,
    problem_errors,
    run_study,
    write_comparison,
    write_report,
)

__version__ = "0.1.0"

__all__ = [
    "AnsatzSpace", "CollocationScheme", "ErrorReport", "IndexRegimeWarning",
    "LinearDAEProblem", "Method", "NodeFamily", "Partition", "PwPolySolution",
    "RankDeficientError", "SchemeError", "SolveReport", "StudyResult", "Weighting",
    "assemble", "doubling", "error_norms", "gauss_legendre_rule", "get_problem",
    "lagrange_eval", "lagrange_gram", "make_nodes", "make_scheme", "min_singular_value",
    "observed_order", "problem_errors", "problem_names", "run_study", "solve",
    "solve_lls", "space_for", "uniform_partition", "write_comparison", "write_report",
]
