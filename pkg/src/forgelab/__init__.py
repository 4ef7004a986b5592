"""forgelab: gradient forging sets, their volumes, and forged SGD trajectories."""

__version__ = "0.1.0"

from . import aesmooth, batch, forging, measure, models, probability, trajectory  # noqa: E402,F401
from .errors import *  # noqa: E402,F401,F403
