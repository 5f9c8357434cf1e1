"""Numerical laboratory for u_t = Delta_p(u^m) + f(u) in the fast-diffusion range."""
__version__ = "0.1.0"

from .model_params import *            # noqa: E402,F401,F403
from .analytic_solutions import *      # noqa: E402,F401,F403
from .pde_solver import *              # noqa: E402,F401,F403
from .fronts import *                  # noqa: E402,F401,F403
from .verify import *                  # noqa: E402,F401,F403
