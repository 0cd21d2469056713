"""
Desk Mobile Manipulation Toolkit - Positive Time Map
無制約変数から正の時間への C¹ 写像
"""

from typing import Tuple

import numpy as np

from ..exceptions import ParameterError

# τ > 0: T = τ²/2 + τ + 1,  τ ≤ 0: T = 1 / (τ²/2 − τ + 1)


def positive_from_free(tau: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(T, dT/dτ)"""
    tau = np.asarray(tau, dtype=float)
    pos = tau > 0.0
    T = np.where(pos, 0.5 * tau * tau + tau + 1.0, 0.0)
    dT = np.where(pos, tau + 1.0, 0.0)
    den = 0.5 * tau * tau - tau + 1.0
    T = np.where(pos, T, 1.0 / den)
    dT = np.where(pos, dT, (1.0 - tau) / den ** 2)
    return T, dT


def free_from_positive(T: np.ndarray) -> np.ndarray:
    """逆写像"""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0.0):
        raise ParameterError("Durations must be positive", str(T))
    return np.where(T > 1.0, np.sqrt(np.maximum(2.0 * T - 1.0, 0.0)) - 1.0,
                    1.0 - np.sqrt(np.maximum(2.0 / T - 1.0, 0.0)))
