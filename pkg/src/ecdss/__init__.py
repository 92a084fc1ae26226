"""Simulator and analytic bounds for multi-class erasure-coded storage."""
from .model import (
    ArrivalFamily,
    ConfigError,
    DataClass,
    Policy,
    PowerModel,
    ServiceFamily,
    SimControls,
    SystemConfig,
    ValidatedConfig,
    effective_rate,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "ArrivalFamily",
    "ConfigError",
    "DataClass",
    "Policy",
    "PowerModel",
    "ServiceFamily",
    "SimControls",
    "SystemConfig",
    "ValidatedConfig",
    "effective_rate",
    "validate",
]
