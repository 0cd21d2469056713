"""
Desk Mobile Manipulation Toolkit - Geometry
SE(3)/SO(3)・楕円・平滑関数
"""

from .ellipse import Ellipse2, d_point_ellipse, d_point_ellipse_grad, fit_ellipse
from .se3 import (
    RigidPose,
    axis_angle_matrix,
    f_d_rot,
    f_d_rot_grad,
    interp_se3,
    rot_x,
    rot_z,
    skew,
    trace_gradient,
)
from .smooth import (
    SmoothParams,
    alpha_poly,
    alpha_poly_grad,
    f_d_ray,
    f_d_ray_grad,
    f_log,
    f_log_grad,
    f_s,
    f_s_grad,
    r_elastic,
    r_elastic_grad,
)

__all__ = [
    # SE(3)
    "RigidPose",
    "axis_angle_matrix",
    "f_d_rot",
    "f_d_rot_grad",
    "interp_se3",
    "rot_x",
    "rot_z",
    "skew",
    "trace_gradient",
    # 楕円
    "Ellipse2",
    "d_point_ellipse",
    "d_point_ellipse_grad",
    "fit_ellipse",
    # 平滑関数
    "SmoothParams",
    "alpha_poly",
    "alpha_poly_grad",
    "f_d_ray",
    "f_d_ray_grad",
    "f_log",
    "f_log_grad",
    "f_s",
    "f_s_grad",
    "r_elastic",
    "r_elastic_grad",
]
