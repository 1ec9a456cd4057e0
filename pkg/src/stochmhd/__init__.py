"""Galerkin simulation of 2-D stochastic MHD with Levy noise on the torus."""

from .config import ExperimentConfig, default_config, load, loads
from .errors import (AliasingError, BlowUpError, HypothesisViolationError, InvalidParameterError,
                     UnsupportedConfigurationError)
from .estimates import BoundCheck, VerificationReport
from .integrator import IntegratorConfig, simulate_ensemble, simulate_path
from .noise import JumpSpec, NoiseModel, SigmaFamily, WienerSpec
from .operators import make_context
from .spectral import MhdState, make_basis

__version__ = "0.1.0"

__all__ = [
    "AliasingError", "BlowUpError", "BoundCheck", "ExperimentConfig", "HypothesisViolationError",
    "IntegratorConfig", "InvalidParameterError", "JumpSpec", "MhdState", "NoiseModel",
    "SigmaFamily", "UnsupportedConfigurationError", "VerificationReport", "WienerSpec",
    "default_config", "load", "loads", "make_basis", "make_context", "simulate_ensemble",
    "simulate_path",
]
