from .grid import Field, Grid  # noqa
from .model import ModelParams, SimConfig, State, simulate  # noqa


__version__ = "1.0.0"
