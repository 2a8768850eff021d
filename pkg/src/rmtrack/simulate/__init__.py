from .generate import GroundTruthLog, GTInstance, GTObject, generate
from .scenario import Scenario, ScenarioError, get_preset, occlusion_suite, preset_suite

__all__ = ["GroundTruthLog", "GTInstance", "GTObject", "generate", "Scenario", "ScenarioError",
           "get_preset", "occlusion_suite", "preset_suite"]
