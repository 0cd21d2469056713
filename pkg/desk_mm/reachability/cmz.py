"""
Desk Mobile Manipulation Toolkit - Compensation Margin Zone
CMZ姿勢サンプリング・到達集合の共通部分・楕円近似
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..core.settings import CmzSettings
from ..exceptions import CmzInfeasibleError, ParameterError, UnreachableTaskError
from ..geometry.ellipse import Ellipse2, fit_ellipse
from ..geometry.se3 import RigidPose, axis_angle_matrix, rot_x
from ..world.esdf import EsdfGrid
from .irm import InverseReachabilityMap

logger = logging.getLogger(__name__)


@dataclass
class CmzSampleSet:
    """公称手先姿勢まわりの摂動姿勢集合"""

    nominal: RigidPose
    poses: List[RigidPose]
    radius: float
    tilt: float
    d_phi: float
    d_theta: float
    d_psi: float
    raw_position_count: int = 0
    discarded: int = 0

    def __len__(self) -> int:
        return len(self.poses)


@dataclass
class CmzRegion:
    """cmz_region の結果。ellipse が None なら r_cmz 縮小の合図"""

    ellipse: Optional[Ellipse2]
    cells: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    radius: float = 0.0

    @property
    def needs_reduction(self) -> bool:
        return self.ellipse is None


def _dedup(points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    keys = np.round(points / tol).astype(np.int64) if tol > 0 else points
    _, idx = np.unique(keys, axis=0, return_index=True)
    return points[np.sort(idx)]


def sample_cmz(nominal: RigidPose, radius: float, tilt: float, d_phi: float, d_theta: float,
               d_psi: float, world: Optional[EsdfGrid] = None,
               sphere_radius: float = 0.03) -> CmzSampleSet:
    """
    CMZ姿勢集合のサンプリング

    位置は半径 r_cmz の球面 (極角 φ_j, 方位角 θ_k)、姿勢は x軸まわりに
    δ_tilt 傾けた後、公称接近軸まわりに ψ_m で回転させる。

    Args:
        nominal: 公称手先姿勢
        radius: r_cmz (m)
        tilt: δ_tilt (rad)
        d_phi, d_theta, d_psi: 角度解像度 (rad)
        world: 衝突判定に使うESDF (Noneなら判定しない)
        sphere_radius: 手先の衝突球半径 (m)

    Returns:
        衝突サンプルを除いた CmzSampleSet

    Raises:
        ParameterError: 非正の解像度
    """
    if min(d_phi, d_theta, d_psi) <= 0.0:
        raise ParameterError("CMZ sampling resolutions must be positive",
                             f"d_phi={d_phi}, d_theta={d_theta}, d_psi={d_psi}")
    n_phi = int(np.floor(2.0 * np.pi / d_phi + 1e-9))
    n_theta = int(np.floor(np.pi / d_theta + 1e-9))
    phi = d_phi * np.arange(n_phi + 1)
    theta = d_theta * np.arange(n_theta + 1)
    P, Th = np.meshgrid(phi, theta, indexing="ij")
    offsets = np.stack([np.cos(Th) * np.sin(P), np.sin(Th) * np.sin(P), np.cos(P)], axis=-1).reshape(-1, 3)
    raw_count = len(offsets)
    positions = _dedup(nominal.translation + radius * offsets)

    R_nom = nominal.rotation_matrix
    if tilt > 0.0:
        R_tilt = R_nom @ rot_x(tilt)
        z_t = R_nom[:, 2]
        n_psi = int(np.floor(2.0 * np.pi / d_psi + 1e-9))
        rotations = [axis_angle_matrix(z_t, m * d_psi) @ R_tilt for m in range(n_psi + 1)]
        keys = np.round(np.array([R.reshape(-1) for R in rotations]) / 1e-9).astype(np.int64)
        _, idx = np.unique(keys, axis=0, return_index=True)
        rotations = [rotations[i] for i in sorted(idx)]
    else:
        # 傾きが無ければ接近軸まわりの回転は接近方向ビン上で区別されない
        rotations = [R_nom]

    keep = np.ones(len(positions), dtype=bool)
    if world is not None:
        values, _, _ = world.query_batch(positions)
        keep = values >= sphere_radius
    poses = [RigidPose.from_rotation_matrix(R, p) for p in positions[keep] for R in rotations]
    discarded = int((~keep).sum()) * len(rotations)
    logger.debug(f"CMZ sampling: {len(poses)} poses kept, {discarded} discarded")
    return CmzSampleSet(nominal, poses, radius, tilt, d_phi, d_theta, d_psi, raw_count, discarded)


def _free_cells(cells: np.ndarray, irm: InverseReachabilityMap, world: Optional[EsdfGrid],
                footprint: float) -> np.ndarray:
    if world is None or len(cells) == 0 or footprint <= 0.0:
        return cells
    centers = irm.cell_center(cells)
    points = np.column_stack([centers, np.full(len(centers), footprint)])
    values, _, _ = world.query_batch(points)
    return cells[values >= footprint]


def cmz_region(samples: CmzSampleSet, irm: InverseReachabilityMap, nominal: RigidPose,
               world: Optional[EsdfGrid] = None, coverage: float = 0.95,
               footprint: float = 0.0) -> CmzRegion:
    """
    全サンプル姿勢の到達集合の共通部分を楕円で近似

    Args:
        samples: CMZ姿勢集合 (非空)
        irm: 逆到達可能性マップ
        nominal: 公称姿勢 (サンプルが空の場合の参照)
        world: ベース接地円の衝突判定用ESDF
        coverage: 楕円の被覆率
        footprint: ベース接地半径 (m)

    Returns:
        CmzRegion (共通部分が空なら ellipse=None)
    """
    poses = samples.poses if len(samples) else [nominal]
    common: Optional[set] = None
    for pose in poses:
        cells = {tuple(c) for c in irm.query(pose)}
        common = cells if common is None else common & cells
        if not common:
            return CmzRegion(None, radius=samples.radius)
    cells = np.array(sorted(common), dtype=int)
    cells = _free_cells(cells, irm, world, footprint)
    if len(cells) == 0:
        return CmzRegion(None, radius=samples.radius)
    ellipse = fit_ellipse(irm.cell_center(cells), coverage, 0.5 * irm.base_resolution)
    return CmzRegion(ellipse, cells, samples.radius)


def compute_cmz(nominal: RigidPose, irm: InverseReachabilityMap, world: Optional[EsdfGrid],
                settings: Optional[CmzSettings] = None, footprint: float = 0.0) -> CmzRegion:
    """
    r_cmz を半減しながら非空の共通部分を探す

    Raises:
        CmzInfeasibleError: r_cmz が下限を下回っても共通部分が空
    """
    settings = settings or CmzSettings()
    radius = settings.radius
    while True:
        samples = sample_cmz(nominal, radius, settings.tilt, settings.d_phi, settings.d_theta,
                             settings.d_psi, world, settings.sphere_radius)
        region = cmz_region(samples, irm, nominal, world, settings.coverage, footprint)
        if not region.needs_reduction:
            if radius < settings.radius:
                logger.warning(f"CMZ radius reduced to {radius:.4f} m")
            return region
        if radius <= 0.0:
            break
        radius *= 0.5
        if radius < settings.radius_floor:
            radius = 0.0
    raise CmzInfeasibleError("CMZ intersection empty at minimum radius",
                             f"nominal={nominal.translation.tolist()}")


def keypoint_ellipse(pose: RigidPose, grasps: Sequence[RigidPose], irm: InverseReachabilityMap,
                     coverage: float = 0.95) -> Ellipse2:
    """
    キーポイントの到達楕円 (全把持候補の到達集合の和集合)

    Args:
        pose: キーポイントの物体姿勢
        grasps: 物体→手先の把持変換候補

    Raises:
        UnreachableTaskError: どの把持でも到達不能
    """
    if not grasps:
        raise ParameterError("Grasp set must not be empty")
    union = [irm.query(pose @ grasp) for grasp in grasps]
    cells = np.vstack(union) if union else np.zeros((0, 2), dtype=int)
    if len(cells) == 0:
        raise UnreachableTaskError("No grasp candidate is reachable",
                                   f"pose={pose.translation.tolist()}, grasps={len(grasps)}")
    cells = np.unique(cells, axis=0)
    return fit_ellipse(irm.cell_center(cells), coverage, 0.5 * irm.base_resolution)
