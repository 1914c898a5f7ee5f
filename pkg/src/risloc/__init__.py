"""Localization of a user behind an obstruction from pilots reflected by
reconfigurable intelligent surface (RIS) tiles."""

from .config import PRESETS, ConfigError, SceneConfig, resolve_scene
from .scene import Scene, build_scene, generate_schedule, schedule_for
from .channel import simulate_measurements
from .direct import EstimationResult, estimate_direct
from .hybrid import HybridConfig, estimate_hybrid

__version__ = "0.1.0"

__all__ = ["PRESETS", "ConfigError", "SceneConfig", "resolve_scene", "Scene", "build_scene",
           "generate_schedule", "schedule_for", "simulate_measurements", "EstimationResult",
           "estimate_direct", "HybridConfig", "estimate_hybrid"]
