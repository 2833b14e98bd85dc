"""Partially smoothed difference-of-convex (pSDC) regularization.

Nonconvex penalties whose total cost stays convex, a matrix test that
certifies it, and a double-loop DC solver.
"""

from .atoms import *  # noqa: F401,F403
from .errors import *  # noqa: F401,F403
from .inner import InnerConfig
from .linalg import default_eig_tol, min_eigenvalue, power_iteration, psd_sqrt, spectral_norm_sq
from .model import *  # noqa: F401,F403
from .solver import *  # noqa: F401,F403

__version__ = "0.1.0"
