"""
Desk Mobile Manipulation Toolkit - Reachability
逆到達可能性マップとCMZ
"""

from .cmz import CmzRegion, CmzSampleSet, cmz_region, compute_cmz, keypoint_ellipse, sample_cmz
from .irm import InverseReachabilityMap, approach_bin, approach_directions, build_irm

__all__ = [
    "InverseReachabilityMap",
    "approach_bin",
    "approach_directions",
    "build_irm",
    "CmzRegion",
    "CmzSampleSet",
    "cmz_region",
    "compute_cmz",
    "keypoint_ellipse",
    "sample_cmz",
]
