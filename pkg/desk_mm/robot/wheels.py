"""
Desk Mobile Manipulation Toolkit - Wheel Kinematics
差動二輪の車輪角速度・角加速度写像
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ..exceptions import SingularityError
from .description import RobotDescription

_B = np.array([[0.0, -1.0], [1.0, 0.0]])


def wheel_rates(v: float, omega_b: float, desc: RobotDescription) -> Tuple[float, float]:
    """
    (前進速度, ヨーレート) から左右車輪角速度

    Returns:
        (ω_l, ω_r)
    """
    r_w = desc.base.wheel_radius
    d_w = desc.base.wheel_separation
    return (2.0 * v - d_w * omega_b) / (2.0 * r_w), (2.0 * v + d_w * omega_b) / (2.0 * r_w)


@dataclass
class BaseRates:
    """経路微分から求めたベースの速度量と勾配

    各勾配は (q̇_b, q̈_b, q⃛_b) に関する 3×2 配列。
    """

    speed: float
    accel: float
    omega: float
    alpha: float
    d_speed: np.ndarray
    d_accel: np.ndarray
    d_omega: np.ndarray
    d_alpha: np.ndarray


def base_rates(qd: Sequence[float], qdd: Sequence[float], qddd: Sequence[float]) -> BaseRates:
    """
    平面経路の微分からベース速度・加速度・ヨーレート・ヨー角加速度

    Raises:
        SingularityError: ‖q̇_b‖ = 0
    """
    qd = np.asarray(qd, dtype=float)
    qdd = np.asarray(qdd, dtype=float)
    qddd = np.asarray(qddd, dtype=float)
    n2 = float(qd @ qd)
    if n2 <= 1e-18:
        raise SingularityError("Base rates undefined at zero velocity")
    s = np.sqrt(n2)
    Bqd = _B @ qd
    A = float(qdd @ Bqd)
    D = float(qddd @ Bqd)
    E = float(qdd @ qd)

    omega = A / n2
    alpha = D / n2 - 2.0 * A * E / n2 ** 2
    accel = E / s

    d_speed = np.zeros((3, 2))
    d_speed[0] = qd / s

    d_accel = np.zeros((3, 2))
    d_accel[0] = qdd / s - E * qd / s ** 3
    d_accel[1] = qd / s

    d_omega = np.zeros((3, 2))
    d_omega[0] = _B.T @ qdd / n2 - 2.0 * A * qd / n2 ** 2
    d_omega[1] = Bqd / n2

    d_alpha = np.zeros((3, 2))
    d_alpha[0] = (_B.T @ qddd / n2 - 2.0 * D * qd / n2 ** 2
                  - 2.0 * (_B.T @ qdd * E + A * qdd) / n2 ** 2
                  + 8.0 * A * E * qd / n2 ** 3)
    d_alpha[1] = -2.0 * (Bqd * E + A * qd) / n2 ** 2
    d_alpha[2] = Bqd / n2
    return BaseRates(s, accel, omega, alpha, d_speed, d_accel, d_omega, d_alpha)


def wheel_rates_from_path(qd: Sequence[float], qdd: Sequence[float], qddd: Sequence[float],
                          desc: RobotDescription) -> Tuple[float, float, float, float]:
    """
    平面経路の微分から車輪角速度・角加速度

    Returns:
        (ω_l, ω_r, α_l, α_r)

    Raises:
        SingularityError: ‖q̇_b‖ < v_min
    """
    speed = float(np.linalg.norm(qd))
    if speed < desc.base.v_min:
        raise SingularityError("Wheel maps are ill-defined below v_min",
                               f"|qd|={speed:.4g} < v_min={desc.base.v_min}")
    rates = base_rates(qd, qdd, qddd)
    omega_l, omega_r = wheel_rates(rates.speed, rates.omega, desc)
    alpha_l, alpha_r = wheel_rates(rates.accel, rates.alpha, desc)
    return omega_l, omega_r, alpha_l, alpha_r
