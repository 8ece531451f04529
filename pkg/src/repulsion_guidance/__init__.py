"""Guidance by repulsion: a driver steering an evader toward a target."""

__version__ = "0.1.0"

from .model import Kappa, ModelParams, Scenario, SystemState, Vec2  # noqa: E402

__all__ = ["Kappa", "ModelParams", "Scenario", "SystemState", "Vec2", "__version__"]
