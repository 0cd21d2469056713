"""
Desk Mobile Manipulation Toolkit - World Model
ESDF・シーン・移動障害物
"""

from .esdf import EsdfGrid, build_esdf, esdf_query
from .obstacles import DynamicObstacle, predict_obstacle
from .scene import BoxPrimitive, CylinderPrimitive, build_world, load_point_cloud, rasterize

__all__ = [
    "EsdfGrid",
    "build_esdf",
    "esdf_query",
    "DynamicObstacle",
    "predict_obstacle",
    "BoxPrimitive",
    "CylinderPrimitive",
    "build_world",
    "load_point_cloud",
    "rasterize",
]
