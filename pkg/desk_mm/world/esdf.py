"""
Desk Mobile Manipulation Toolkit - ESDF
ボクセルEuclidean符号付き距離場と三線形補間クエリ
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.ndimage import distance_transform_edt

from ..exceptions import ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EsdfGrid:
    """符号付き距離場 (障害物外で正、内部で負)

    origin はボクセル (0,0,0) の中心座標。
    """

    origin: np.ndarray
    resolution: float
    values: np.ndarray
    cap: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 3:
            raise ParameterError("ESDF values must be a 3D array")

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.values.shape)

    @property
    def upper(self) -> np.ndarray:
        """最後のボクセル中心"""
        return self.origin + (np.asarray(self.dims) - 1) * self.resolution

    def voxel_center(self, index: Sequence[int]) -> np.ndarray:
        return self.origin + np.asarray(index, dtype=float) * self.resolution

    def query_batch(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        三線形補間による一括クエリ

        Args:
            points: N×3

        Returns:
            (値 N, 勾配 N×3, 範囲内フラグ N)
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dims = np.asarray(self.dims)
        frac = (pts - self.origin) / self.resolution
        outside = (frac < 0.0) | (frac > dims - 1)
        frac = np.clip(frac, 0.0, dims - 1)
        i0 = np.minimum(np.floor(frac).astype(int), np.maximum(dims - 2, 0))
        i1 = np.minimum(i0 + 1, dims - 1)
        t = frac - i0

        v = self.values
        c000 = v[i0[:, 0], i0[:, 1], i0[:, 2]]
        c100 = v[i1[:, 0], i0[:, 1], i0[:, 2]]
        c010 = v[i0[:, 0], i1[:, 1], i0[:, 2]]
        c110 = v[i1[:, 0], i1[:, 1], i0[:, 2]]
        c001 = v[i0[:, 0], i0[:, 1], i1[:, 2]]
        c101 = v[i1[:, 0], i0[:, 1], i1[:, 2]]
        c011 = v[i0[:, 0], i1[:, 1], i1[:, 2]]
        c111 = v[i1[:, 0], i1[:, 1], i1[:, 2]]
        tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
        sx, sy, sz = 1.0 - tx, 1.0 - ty, 1.0 - tz

        value = (sx * sy * sz * c000 + tx * sy * sz * c100 + sx * ty * sz * c010 + tx * ty * sz * c110
                 + sx * sy * tz * c001 + tx * sy * tz * c101 + sx * ty * tz * c011 + tx * ty * tz * c111)
        grad = np.zeros_like(pts)
        grad[:, 0] = (sy * sz * (c100 - c000) + ty * sz * (c110 - c010)
                      + sy * tz * (c101 - c001) + ty * tz * (c111 - c011))
        grad[:, 1] = (sx * sz * (c010 - c000) + tx * sz * (c110 - c100)
                      + sx * tz * (c011 - c001) + tx * tz * (c111 - c101))
        grad[:, 2] = (sx * sy * (c001 - c000) + tx * sy * (c101 - c100)
                      + sx * ty * (c011 - c010) + tx * ty * (c111 - c110))
        grad /= self.resolution
        # 範囲外に押し出した軸は定数延長
        grad[outside] = 0.0
        return value, grad, ~outside.any(axis=1)

    def query(self, point: Sequence[float]) -> Tuple[float, np.ndarray, bool]:
        """単一点クエリ: (値, 勾配, 範囲内フラグ)"""
        value, grad, inside = self.query_batch(np.asarray(point, dtype=float)[None, :])
        return float(value[0]), grad[0], bool(inside[0])

    def value(self, point: Sequence[float]) -> float:
        return self.query(point)[0]


def build_esdf(occupancy: np.ndarray, resolution: float,
               origin: Sequence[float] = (0.0, 0.0, 0.0), cap: float = 5.0) -> EsdfGrid:
    """
    占有格子から厳密なEuclidean距離変換でESDFを構築

    Args:
        occupancy: 3Dブール配列 (True = 占有)
        resolution: ボクセル解像度 (m)
        origin: ボクセル (0,0,0) の中心
        cap: 距離の上限 (m)

    Returns:
        EsdfGrid

    Raises:
        ParameterError: 空配列または非正の解像度
    """
    occ = np.asarray(occupancy, dtype=bool)
    if occ.ndim != 3 or occ.size == 0:
        raise ParameterError("Occupancy must be a non-empty 3D grid", str(occ.shape))
    if resolution <= 0.0:
        raise ParameterError("Resolution must be positive", str(resolution))

    if not occ.any():
        logger.warning("Empty occupancy grid; ESDF set to cap everywhere")
        values = np.full(occ.shape, cap)
    else:
        outside = distance_transform_edt(~occ) * resolution
        if occ.all():
            inside = np.full(occ.shape, cap)
        else:
            inside = distance_transform_edt(occ) * resolution
        values = np.where(occ, -inside, outside)
        values = np.clip(values, -cap, cap)
    grid = EsdfGrid(np.asarray(origin, dtype=float), float(resolution), values, cap)
    logger.info(f"ESDF built: dims={grid.dims}, resolution={resolution}")
    return grid


def esdf_query(grid: EsdfGrid, point: Sequence[float]) -> Tuple[float, np.ndarray, bool]:
    """
    ESDFの値と解析勾配

    範囲外の点は境界へクランプして評価し、フラグを False で返す。
    """
    value, grad, inside = grid.query(point)
    if not inside:
        logger.debug(f"ESDF query outside grid: {point}")
    return value, grad, inside
