"""Prediction-side adversarial object placement against a surrogate LiDAR
perception, prediction and planning pipeline, with a heading-consistency
defense and an experiment harness."""

from .defense import DefenseConfig, detect_adversarial, repair_states
from .scene import Outcome, SceneSim
from .world import ConfigError, Pose2D, ScenarioConfig, load_scenario

__version__ = "0.1.0"

__all__ = ["ConfigError", "DefenseConfig", "Outcome", "Pose2D", "ScenarioConfig", "SceneSim",
           "detect_adversarial", "load_scenario", "repair_states"]
