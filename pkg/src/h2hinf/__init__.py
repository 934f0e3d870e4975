"""Data-driven mixed H2/H-infinity control synthesis for disturbed LTI plants.

Identify a nonlinear plant, linearize it, search for an admissible
H-infinity-bounded initial gain, and learn the robust feedback policy from
trajectory data, validated against model-based Riccati solutions.
"""

from .errors import DivergenceError, NumericalError
from .lti import AdmissibilityReport, LtiPlant, RealizabilityReport

__all__ = [
    "AdmissibilityReport",
    "DivergenceError",
    "LtiPlant",
    "NumericalError",
    "RealizabilityReport",
]

__version__ = "0.1.0"
