"""Simulation, witnesses, locality classification and randomness attacks for
the two-source bilocal network with a feedback-wired central party."""

from importlib.metadata import PackageNotFoundError, version

from .exceptions import BilocalError, InputError, SolverError
from .qstate import Povm, QuantumState, purify, singlet, werner
from .simulation import (
    OPTIMAL_SEPARABLE,
    TABLE_ONE,
    AngleSet,
    Behavior,
    CentralConfig,
    Strategy,
    behavior,
)
from .witness import WitnessResult, fnn_values

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source checkout
    __version__ = "0.1.0"

__all__ = [
    "AngleSet",
    "Behavior",
    "BilocalError",
    "CentralConfig",
    "InputError",
    "OPTIMAL_SEPARABLE",
    "Povm",
    "QuantumState",
    "SolverError",
    "Strategy",
    "TABLE_ONE",
    "WitnessResult",
    "behavior",
    "fnn_values",
    "purify",
    "singlet",
    "werner",
    "__version__",
]
