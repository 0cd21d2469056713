"""
Desk Mobile Manipulation Toolkit - Switching Weights
軌道追従とタスク誤差補償の相補的な重み
"""

from typing import Tuple

from ..geometry.smooth import f_log
from .warping import WarpSchedule


def switch_weights(schedule: WarpSchedule, t: float) -> Tuple[float, float]:
    """
    (σ_s, σ_ee)

    σ_s,i = 1 − (f_log(t − t̂_s, −T_sw, 0) − f_log(t − t̂_e, 0, T_sw)) の積を σ_s とし、
    σ_ee = 1 − σ_s。窓の外では (1, 0)、拡張操作区間内では (0, 1)。
    """
    sigma_s = 1.0
    for window in schedule.windows:
        tsw = window.switch_duration
        rise = f_log(t - window.t_hat_s, -tsw, 0.0)
        fall = f_log(t - window.t_hat_e, 0.0, tsw)
        sigma_s *= 1.0 - (rise - fall)
    sigma_s = min(max(sigma_s, 0.0), 1.0)
    return sigma_s, 1.0 - sigma_s
