"""
Desk Mobile Manipulation Toolkit - Robot Description
差動二輪ベース + L自由度アームの記述と読み込み
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, Field, ValidationError as PydanticValidationError, field_validator, model_validator

from ..exceptions import ConfigurationError
from ..geometry.se3 import RigidPose

logger = logging.getLogger(__name__)

DESCRIPTION_VERSION = "1.0"
DATA_DIR = Path(__file__).resolve().parent.parent / "data" / "robots"


# ---- ファイルスキーマ ----

class PoseModel(BaseModel):
    """固定変換 (xyz + rpy)"""

    xyz: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    rpy: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])

    @field_validator("xyz", "rpy")
    @classmethod
    def validate_triplet(cls, v):
        if len(v) != 3:
            raise ValueError("expected 3 values")
        return [float(x) for x in v]


class SphereModel(BaseModel):
    """衝突球"""

    center: List[float] = Field(..., description="リンク座標系での中心 (m)")
    radius: float = Field(..., gt=0.0, description="半径 (m)")

    @field_validator("center")
    @classmethod
    def validate_center(cls, v):
        if len(v) != 3:
            raise ValueError("sphere center needs 3 values")
        return [float(x) for x in v]


class LimitModel(BaseModel):
    """関節制限"""

    lower: float = Field(..., description="q_min (rad)")
    upper: float = Field(..., description="q_max (rad)")
    velocity: float = Field(..., gt=0.0, description="ω_max (rad/s)")
    acceleration: float = Field(..., gt=0.0, description="α_max (rad/s²)")

    @model_validator(mode="after")
    def check_order(self):
        if not self.lower < self.upper:
            raise ValueError(f"joint limits must satisfy lower < upper ({self.lower}, {self.upper})")
        return self


class JointModel(BaseModel):
    """回転関節"""

    name: str
    origin: PoseModel = Field(default_factory=PoseModel)
    axis: List[float] = Field(default_factory=lambda: [0.0, 0.0, 1.0])
    limits: LimitModel
    spheres: List[SphereModel] = Field(default_factory=list)

    @field_validator("axis")
    @classmethod
    def validate_axis(cls, v):
        if len(v) != 3 or np.linalg.norm(v) < 1e-9:
            raise ValueError("joint axis must be a non-zero 3-vector")
        return [float(x) for x in np.asarray(v, dtype=float) / np.linalg.norm(v)]


class BaseParamsModel(BaseModel):
    """差動二輪ベースのパラメータ"""

    wheel_radius: float = Field(..., gt=0.0, description="r_w (m)")
    wheel_separation: float = Field(..., gt=0.0, description="d_w (m)")
    wheel_omega_max: float = Field(..., gt=0.0, description="ω_w,max (rad/s)")
    wheel_alpha_max: float = Field(..., gt=0.0, description="α_w,max (rad/s²)")
    v_min: float = Field(..., gt=0.0, description="最小並進速度 (m/s)")
    footprint_radius: float = Field(default=0.25, gt=0.0, description="フットプリント半径 (m)")
    spheres: List[SphereModel] = Field(default_factory=list)


class RobotDescriptionModel(BaseModel):
    """ロボット記述ファイルのスキーマ"""

    version: str = DESCRIPTION_VERSION
    name: str = "robot"
    base: BaseParamsModel
    mount: PoseModel = Field(default_factory=PoseModel)
    joints: List[JointModel] = Field(..., min_length=1)
    ee_frame: PoseModel = Field(default_factory=PoseModel)
    camera_frame: PoseModel = Field(default_factory=PoseModel)
    self_collision_ignore: List[List[int]] = Field(default_factory=list)

    @field_validator("version")
    @classmethod
    def validate_version(cls, v):
        if v.split(".")[0] != DESCRIPTION_VERSION.split(".")[0]:
            raise ValueError(f"unsupported robot description version {v}")
        return v


# ---- 実行時表現 ----

@dataclass(frozen=True)
class JointSpec:
    """関節 (親リンク→関節の固定変換と回転軸)"""

    name: str
    origin: np.ndarray
    axis: np.ndarray
    q_min: float
    q_max: float
    omega_max: float
    alpha_max: float


@dataclass(frozen=True)
class BaseParams:
    """ベースパラメータ"""

    wheel_radius: float
    wheel_separation: float
    wheel_omega_max: float
    wheel_alpha_max: float
    v_min: float
    footprint_radius: float = 0.25

    @property
    def max_speed(self) -> float:
        return self.wheel_omega_max * self.wheel_radius


@dataclass(frozen=True)
class RobotDescription:
    """ロボット記述 (読み込み後は不変)"""

    name: str
    joints: Tuple[JointSpec, ...]
    base: BaseParams
    mount: np.ndarray
    ee_frame: np.ndarray
    camera_frame: np.ndarray
    sphere_links: np.ndarray
    sphere_centers: np.ndarray
    sphere_radii: np.ndarray
    self_collision_pairs: np.ndarray
    digest: str = ""
    source: Dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    @property
    def dim(self) -> int:
        """一般化座標 q = [q_x, q_y, q_m] の次元"""
        return 2 + self.joint_count

    @property
    def q_min(self) -> np.ndarray:
        return np.array([j.q_min for j in self.joints])

    @property
    def q_max(self) -> np.ndarray:
        return np.array([j.q_max for j in self.joints])

    @property
    def omega_max(self) -> np.ndarray:
        return np.array([j.omega_max for j in self.joints])

    @property
    def alpha_max(self) -> np.ndarray:
        return np.array([j.alpha_max for j in self.joints])

    @property
    def sphere_count(self) -> int:
        return len(self.sphere_radii)

    @property
    def max_reach(self) -> float:
        """アームベースから手先までの最大到達距離の上界"""
        reach = sum(float(np.linalg.norm(j.origin[:3, 3])) for j in self.joints[1:])
        return reach + float(np.linalg.norm(self.ee_frame[:3, 3]))

    def within_limits(self, arm: Sequence[float], tol: float = 0.0) -> bool:
        arm = np.asarray(arm, dtype=float)
        return bool(np.all(arm >= self.q_min - tol) and np.all(arm <= self.q_max + tol))

    def clamp(self, arm: Sequence[float]) -> np.ndarray:
        return np.clip(np.asarray(arm, dtype=float), self.q_min, self.q_max)


def _pose_matrix(model: PoseModel) -> np.ndarray:
    return RigidPose.from_xyz_rpy(model.xyz, model.rpy).matrix


def build_description(model: RobotDescriptionModel) -> RobotDescription:
    """
    スキーマから実行時記述を構築

    Args:
        model: 検証済みスキーマ

    Returns:
        RobotDescription
    """
    joints = tuple(
        JointSpec(name=j.name, origin=_pose_matrix(j.origin), axis=np.asarray(j.axis),
                  q_min=j.limits.lower, q_max=j.limits.upper,
                  omega_max=j.limits.velocity, alpha_max=j.limits.acceleration)
        for j in model.joints
    )
    base = BaseParams(
        wheel_radius=model.base.wheel_radius,
        wheel_separation=model.base.wheel_separation,
        wheel_omega_max=model.base.wheel_omega_max,
        wheel_alpha_max=model.base.wheel_alpha_max,
        v_min=model.base.v_min,
        footprint_radius=model.base.footprint_radius,
    )

    # 衝突球をリンク番号付きの配列に展開 (0 = ベース)
    links: List[int] = []
    centers: List[List[float]] = []
    radii: List[float] = []
    per_link = [model.base.spheres] + [j.spheres for j in model.joints]
    for link, spheres in enumerate(per_link):
        for s in spheres:
            links.append(link)
            centers.append(s.center)
            radii.append(s.radius)

    ignore = {tuple(sorted(p)) for p in model.self_collision_ignore if len(p) == 2}
    ignore.update((l, l + 1) for l in range(len(joints)))
    pairs = [
        (i, k)
        for i in range(len(links))
        for k in range(i + 1, len(links))
        if links[i] != links[k] and tuple(sorted((links[i], links[k]))) not in ignore
    ]

    source = model.model_dump()
    digest = hashlib.sha256(json.dumps(source, sort_keys=True).encode("utf-8")).hexdigest()
    return RobotDescription(
        name=model.name,
        joints=joints,
        base=base,
        mount=_pose_matrix(model.mount),
        ee_frame=_pose_matrix(model.ee_frame),
        camera_frame=_pose_matrix(model.camera_frame),
        sphere_links=np.asarray(links, dtype=int),
        sphere_centers=np.asarray(centers, dtype=float).reshape(-1, 3),
        sphere_radii=np.asarray(radii, dtype=float),
        self_collision_pairs=np.asarray(pairs, dtype=int).reshape(-1, 2),
        digest=digest,
        source=source,
    )


def parse_description(data: Dict) -> RobotDescription:
    """辞書からロボット記述を検証・構築"""
    try:
        model = RobotDescriptionModel(**data)
    except PydanticValidationError as e:
        raise ConfigurationError("Robot description validation failed", str(e))
    return build_description(model)


def load_robot_description(path_or_name: Union[str, Path]) -> RobotDescription:
    """
    ロボット記述ファイルの読み込み

    Args:
        path_or_name: YAMLファイルのパス、または同梱記述の名前 (planar3, spatial6)

    Returns:
        RobotDescription

    Raises:
        ConfigurationError: ファイルが存在しない/不正な場合
    """
    path = Path(path_or_name)
    if not path.exists():
        bundled = DATA_DIR / f"{path_or_name}.yaml"
        if not bundled.exists():
            raise ConfigurationError("Robot description not found", str(path_or_name))
        path = bundled
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigurationError("Invalid YAML in robot description", str(e))
    if not isinstance(data, dict):
        raise ConfigurationError("Robot description must be a mapping", str(path))
    desc = parse_description(data)
    logger.info(f"Robot description loaded: {desc.name} ({desc.joint_count} joints)")
    return desc


def resolve_description(reference: Optional[str], base_dir: Optional[Path] = None) -> RobotDescription:
    """シナリオ内の参照 (相対パスまたは同梱名) を解決"""
    if reference is None:
        return load_robot_description("spatial6")
    if base_dir is not None and (base_dir / reference).exists():
        return load_robot_description(base_dir / reference)
    return load_robot_description(reference)
