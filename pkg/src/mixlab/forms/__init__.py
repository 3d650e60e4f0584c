"""Dirichlet forms over enumerated state spaces and their spectral certificates."""

from .spaces import *  # noqa: F401,F403
from .quadratic import *  # noqa: F401,F403
from .spectral import *  # noqa: F401,F403
from .checks import *  # noqa: F401,F403
