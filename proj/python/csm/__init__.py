"""Click sequence model toolkit: learn a distribution over click sequences
from query logs, extract the K most probable sequences, and evaluate."""

from ._csm import *  # noqa: F401,F403

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
