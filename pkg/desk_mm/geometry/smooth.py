"""
Desk Mobile Manipulation Toolkit - Smooth Functions
最適化で微分される平滑スカラー関数群 (解析勾配付き)
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ..exceptions import DomainError, ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SmoothParams:
    """平滑化パラメータ"""

    mu: float = 0.01

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ParameterError("Smoothing width must be positive", f"mu={self.mu}")


def f_log_grad(x: float, a: float, b: float) -> Tuple[float, float]:
    """
    C²連続の4次ブレンド関数とその導関数

    Args:
        x: 入力
        a: 下端 (値0)
        b: 上端 (値1)

    Returns:
        (値, d値/dx)

    Raises:
        DomainError: a >= b の場合
    """
    if not a < b:
        raise DomainError("f_log requires a < b", f"a={a}, b={b}")
    xb = x - 0.5 * (a + b)
    mu = 0.5 * (b - a)
    mu4 = mu ** 4
    if xb <= -mu:
        return 0.0, 0.0
    if xb <= 0.0:
        value = (xb + mu) ** 3 * (mu - xb) / (2.0 * mu4)
        return value, (xb + mu) ** 2 * (mu - 2.0 * xb) / mu4
    if xb <= mu:
        value = (xb + mu) * (xb - mu) ** 3 / (2.0 * mu4) + 1.0
        return value, (xb - mu) ** 2 * (2.0 * xb + mu) / mu4
    return 1.0, 0.0


def f_log(x: float, a: float, b: float) -> float:
    """C²連続の4次ブレンド関数"""
    return f_log_grad(x, a, b)[0]


def f_s_grad(x: float, d_v: float, smooth: SmoothParams) -> Tuple[float, float]:
    """
    4相の平滑回復関数とその導関数

    Raises:
        ParameterError: d_v > 0 かつ μ >= d_v の場合
    """
    if d_v <= 0.0:
        return 0.0, 0.0
    mu = smooth.mu
    if mu >= d_v:
        raise ParameterError("f_s requires mu < d_v", f"mu={mu}, d_v={d_v}")
    x = max(float(x), 0.0)
    if x < mu:
        value = (mu - 0.5 * x) * (x / mu) ** 3
        return value, x * x * (3.0 * mu - 2.0 * x) / mu ** 3
    if x < d_v:
        return x - 0.5 * mu, 1.0
    if x < d_v + mu:
        xb = d_v + mu - x
        value = d_v - (mu - 0.5 * xb) * (xb / mu) ** 3
        return value, xb * xb * (3.0 * mu - 2.0 * xb) / mu ** 3
    return d_v, 0.0


def f_s(x: float, d_v: float, smooth: SmoothParams) -> float:
    """4相の平滑回復関数"""
    return f_s_grad(x, d_v, smooth)[0]


def r_elastic_grad(p_t: Sequence[float], p: Sequence[float], r: float,
                   esdf_at_target: float, d_s: float,
                   smooth: SmoothParams) -> Tuple[float, np.ndarray]:
    """
    弾性衝突球半径と球中心 p に関する勾配

    接触予定位置 p_t で r − f_dv まで縮み、距離とともに r へ回復する。
    平滑幅は f_dv の半分を超えないよう調整する。

    Returns:
        (半径, 3次元勾配)
    """
    p_t = np.asarray(p_t, dtype=float)
    p = np.asarray(p, dtype=float)
    f_dv = max(0.0, r + d_s - esdf_at_target)
    if f_dv <= 0.0:
        return float(r), np.zeros(3)
    effective = SmoothParams(min(smooth.mu, 0.5 * f_dv))
    offset = p - p_t
    dist = float(np.linalg.norm(offset))
    value, slope = f_s_grad(dist, f_dv, effective)
    if dist <= 0.0:
        return float(r - f_dv + value), np.zeros(3)
    return float(r - f_dv + value), slope * offset / dist


def r_elastic(p_t: Sequence[float], p: Sequence[float], r: float,
              esdf_at_target: float, d_s: float, smooth: SmoothParams) -> float:
    """弾性衝突球半径"""
    return r_elastic_grad(p_t, p, r, esdf_at_target, d_s, smooth)[0]


def f_d_ray_grad(p: Sequence[float], p_r: Sequence[float], v_r: Sequence[float],
                 smooth: SmoothParams) -> Tuple[float, np.ndarray]:
    """
    点から半直線までの平滑距離と勾配

    方向余弦が負側では原点までのユークリッド距離、正側では垂線距離をブレンドする。

    Raises:
        ParameterError: v_r が単位ベクトルでない場合
    """
    v = np.asarray(v_r, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ParameterError("Ray direction must be a unit vector", str(v_r))
    delta = np.asarray(p, dtype=float) - np.asarray(p_r, dtype=float)
    n = float(np.linalg.norm(delta))
    if n <= 0.0:
        return 0.0, np.zeros(3)
    perp = delta - v * float(v @ delta)
    e = float(np.linalg.norm(perp))
    c = float(v @ delta) / n
    w, dw_dc = f_log_grad(c, -smooth.mu, smooth.mu)
    value = (1.0 - w) * n + w * e
    grad_n = delta / n
    grad_e = perp / e if e > 0.0 else np.zeros(3)
    grad_c = (v - c * grad_n) / n
    grad = (1.0 - w) * grad_n + w * grad_e + (e - n) * dw_dc * grad_c
    return float(value), grad


def f_d_ray(p: Sequence[float], p_r: Sequence[float], v_r: Sequence[float],
            smooth: SmoothParams) -> float:
    """点から半直線までの平滑距離"""
    return f_d_ray_grad(p, p_r, v_r, smooth)[0]


def alpha_poly_grad(tau: float, debug: bool = False) -> Tuple[float, float]:
    """5次スムースステップと導関数"""
    if tau < 0.0 or tau > 1.0:
        if debug:
            logger.debug(f"alpha_poly argument clamped: {tau}")
        tau = min(max(tau, 0.0), 1.0)
    value = tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)
    return value, 30.0 * tau * tau * (tau - 1.0) ** 2


def alpha_poly(tau: float, debug: bool = False) -> float:
    """5次スムースステップ 6τ⁵ − 15τ⁴ + 10τ³"""
    return alpha_poly_grad(tau, debug)[0]
