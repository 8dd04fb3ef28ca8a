"""Reaction-diffusion models of information spread over social cascades."""
from .errors import *  # noqa: F401,F403
from .cascade import *  # noqa: F401,F403
from .spline import *  # noqa: F401,F403
from .models import *  # noqa: F401,F403
from .solver import *  # noqa: F401,F403
from .spectral import *  # noqa: F401,F403
from .stefan import *  # noqa: F401,F403
from .calibrate import *  # noqa: F401,F403

__version__ = "0.1.0"
