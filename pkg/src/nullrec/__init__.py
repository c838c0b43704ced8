"""Simulation and statistical verification of fast-slow diffusions whose fast
coordinate is null recurrent and whose slow coordinate only feels the fast one
near an interface."""

__version__ = "0.1.0"

from .coefficients import AveragedInterfaceData, CoefficientSet, average_interface, validate_assumptions
from .models import get_model, list_models
from .sde import TimeGrid, simulate_ensemble, simulate_full

__all__ = ["AveragedInterfaceData", "CoefficientSet", "TimeGrid", "average_interface", "get_model",
           "list_models", "simulate_ensemble", "simulate_full", "validate_assumptions", "__version__"]
