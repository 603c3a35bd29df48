"""Active-inference navigation: topological mapping, belief-based
localisation and expected-free-energy planning in a 2D simulator."""

from .model import (ActionSpace, BinGrid, GenerativeModel, HyperParams,
                    Preferences, entropy, kl_divergence, normalize)
from .inference import (BeliefState, LocalisationOutcome, ObsMatchKind,
                        posterior_update, predict_beliefs, resolve_localisation,
                        zscore_confidence)
from .agent import NavigationAgent
from .simulator import DriftModel, World, lidar_scan, load_world
from .harness import RunConfig, run, replay

__all__ = [
    "ActionSpace", "BinGrid", "GenerativeModel", "HyperParams", "Preferences",
    "entropy", "kl_divergence", "normalize",
    "BeliefState", "LocalisationOutcome", "ObsMatchKind",
    "posterior_update", "predict_beliefs", "resolve_localisation",
    "zscore_confidence",
    "NavigationAgent", "DriftModel", "World", "lidar_scan", "load_world",
    "RunConfig", "run", "replay",
]

__version__ = "0.1.0"
