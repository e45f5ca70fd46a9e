"""Nash equilibria of monotone games by integrating the associated flow.

Feasible-set projections and natural-residual certificates live in ``core``;
time integration (projected Euler, implicit proximal) and Cesaro averaging in
``flow``; built-in finite games in ``problems``; grid discretizations of the
parabolic families in ``pde``; the dual-gradient construction in ``legendre``.
"""

from .core import (
    Ball,
    Box,
    ConvexSet,
    GamePoint,
    GameProblem,
    HalfspaceIntersection,
    MonotonicityReport,
    Simplex,
    WholeSpace,
    check_monotonicity,
    estimate_lipschitz,
    max_gradient_error,
    nash_residual,
)
from .flow import (
    FlowConfig,
    FlowTrajectory,
    InnerSolveConfig,
    InnerSolveError,
    SolveError,
    SolveResult,
    cesaro_mean,
    contraction_audit,
    integrate,
    read_trajectory_csv,
    solve,
    step_explicit,
    step_proximal,
    write_trajectory_csv,
)
from .problems import (
    bilinear_zero_sum,
    get_problem,
    n_linear_game,
    quadratic_matrix_game,
    quadratic_two_player,
    random_monotone_quadratic_game,
    rotation_game,
)

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "Box",
    "ConvexSet",
    "GamePoint",
    "GameProblem",
    "HalfspaceIntersection",
    "MonotonicityReport",
    "Simplex",
    "WholeSpace",
    "check_monotonicity",
    "estimate_lipschitz",
    "max_gradient_error",
    "nash_residual",
    "FlowConfig",
    "FlowTrajectory",
    "InnerSolveConfig",
    "InnerSolveError",
    "SolveError",
    "SolveResult",
    "cesaro_mean",
    "contraction_audit",
    "integrate",
    "read_trajectory_csv",
    "solve",
    "step_explicit",
    "step_proximal",
    "write_trajectory_csv",
    "bilinear_zero_sum",
    "get_problem",
    "n_linear_game",
    "quadratic_matrix_game",
    "quadratic_two_player",
    "random_monotone_quadratic_game",
    "rotation_game",
    "__version__",
]
