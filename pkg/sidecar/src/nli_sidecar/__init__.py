"""NLI sidecar service package."""

from .config import SidecarConfig
from .scorers import OverlapHeuristicScorer, build_scorer, map_label_indices

__all__ = ["SidecarConfig", "OverlapHeuristicScorer", "build_scorer", "map_label_indices"]
