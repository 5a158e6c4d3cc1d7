"""Uplink ISAC simulator: bistatic target detection from multi-user uplink signals.

Submodules, bottom-up: :mod:`numerics`, :mod:`scenario`, :mod:`estimation`,
:mod:`metrics`, :mod:`cvx`, :mod:`power_alloc`, :mod:`beamforming` and the
experiment :mod:`harness`.
"""
from .scenario import Geometry, PathLossParams, SystemConfig, default_scenario

__version__ = "0.1.0"
__all__ = ["Geometry", "PathLossParams", "SystemConfig", "default_scenario", "__version__"]
