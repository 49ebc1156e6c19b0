"""Linear-quadratic control of stochastic singular (descriptor) systems.

Pipeline: pencil analysis and Weierstrass form (:mod:`sslq.pencil`),
well-posedness (:mod:`sslq.wellposed`), reduction to a normal LQ problem
(:mod:`sslq.reduction`), Riccati solvers (:mod:`sslq.riccati`), exact
controllability (:mod:`sslq.controllability`) and Monte Carlo validation
(:mod:`sslq.simulate`).
"""

from ._linalg import config
from .controllability import check_h3, pbh_criterion, subspace_criterion
from .errors import *  # noqa: F401,F403
from .pencil import Pencil, is_regular, kronecker_structure, weierstrass
from .problem import ProblemFile, load, load_bundled
from .reduction import LQWeights, ReducedLQ, assemble, suggest_feedback, verify_k
from .riccati import (feedback_finite, feedback_infinite, solve_are, solve_finite,
                      solve_finite_adaptive)
from .simulate import SimConfig, analytic_scalar_path, estimate_value_curve, simulate_closed_loop
from .system import SingularSystem
from .wellposed import analyze, check_c_equals_a, check_c_zero, check_strongly_regular

__version__ = "0.1.0"
