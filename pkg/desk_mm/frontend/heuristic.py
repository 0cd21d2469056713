"""
Desk Mobile Manipulation Toolkit - Progress-aware Heuristic
残りの到達楕円を順に巡る距離の見積もり
"""

from typing import Sequence

import numpy as np

from ..geometry.ellipse import Ellipse2, d_point_ellipse


def _distances(points: np.ndarray, ellipse: Ellipse2) -> np.ndarray:
    return np.array([d_point_ellipse(p, ellipse) for p in points])


def progress_heuristic(position: Sequence[float], progress: int, ellipses: Sequence[Ellipse2],
                       boundary_samples: int = 64) -> float:
    """
    進捗考慮ヒューリスティック

    Args:
        position: ベース平面位置
        progress: 次の目標キーポイント番号 𝔫 (1始まり)
        ellipses: 到達楕円 E_1..E_Np
        boundary_samples: 境界の一様サンプル数

    Returns:
        残り経路長の見積もり (m, 非負)
    """
    total = len(ellipses)
    if progress > total:
        return 0.0
    q = np.asarray(position, dtype=float)

    k_effect = progress
    while k_effect <= total and ellipses[k_effect - 1].contains(q):
        k_effect += 1
    if k_effect == total + 1:
        return 0.0

    if k_effect == progress:
        start = q
    else:
        boundary = ellipses[progress - 1].boundary_points(boundary_samples)
        start = boundary[int(np.argmin(_distances(boundary, ellipses[k_effect - 1])))]

    h = 0.0
    last = start
    for k in range(k_effect, total):
        boundary = ellipses[k - 1].boundary_points(boundary_samples)
        cost = np.linalg.norm(boundary - last, axis=1) + _distances(boundary, ellipses[k])
        point = boundary[int(np.argmin(cost))]
        h += float(np.linalg.norm(last - point))
        last = point
    return h + d_point_ellipse(last, ellipses[total - 1])
