"""Lumped-parameter simulation of switching electromagnets.

Magnetic circuits are modeled as networks of nonlinear reluctances,
air-gap permeances, hysteresis reluctances (Tellinen minor-loop rule)
and eddy-current shell ladders, coupled to armature mechanics and a
current-controlled drive with voltage limiting. A stiff implicit
integrator advances the coupled system; the CLI runs switching
scenarios and extracts timing metrics.
"""

from magswitch.errors import ConfigError, DataFormatError, FitError, SolverError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataFormatError", "FitError", "SolverError", "__version__"]
