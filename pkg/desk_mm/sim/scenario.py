"""
Desk Mobile Manipulation Toolkit - Scenario Definition
シナリオファイル (YAML) の読み書きと実行用オブジェクトへの変換
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, Field, ValidationError as PydanticValidationError, field_validator, model_validator

from ..core.settings import OracleSettings, WorldSettings
from ..exceptions import ScenarioError
from ..frontend.tasks import TASK_KINDS, GripperSwitch, PlaceRegion, TaskSpec
from ..geometry.se3 import RigidPose
from ..robot.description import PoseModel, RobotDescription, SphereModel, resolve_description
from ..robot.state import WholeBodyState
from ..world.esdf import EsdfGrid
from ..world.obstacles import DynamicObstacle
from ..world.scene import BoxPrimitive, CylinderPrimitive, Primitive, build_world, load_point_cloud

logger = logging.getLogger(__name__)

SCENARIO_VERSION = "1.0"
SCENARIO_DIR = Path(__file__).resolve().parent.parent / "data" / "scenarios"
PRESETS = ("simple", "office-like")
BENCHMARK_DISPLACEMENTS = (0.0, 0.05, 0.10)


# ---- ファイルスキーマ ----

class PrimitiveModel(BaseModel):
    """シーンの基本形状"""

    type: Literal["box", "cylinder"]
    center: List[float]
    size: Optional[List[float]] = None
    yaw: float = 0.0
    radius: Optional[float] = None
    height: Optional[float] = None

    @model_validator(mode="after")
    def check_shape(self):
        """形状ごとの必須項目"""
        if len(self.center) != 3:
            raise ValueError("primitive center needs 3 values")
        if self.type == "box" and (self.size is None or len(self.size) != 3):
            raise ValueError("box needs size [x, y, z]")
        if self.type == "cylinder" and (self.radius is None or self.height is None):
            raise ValueError("cylinder needs radius and height")
        return self

    def build(self) -> Primitive:
        if self.type == "box":
            return BoxPrimitive(tuple(self.center), tuple(self.size), self.yaw)
        return CylinderPrimitive(tuple(self.center), self.radius, self.height)


class WorldModel(BaseModel):
    """シーン"""

    primitives: List[PrimitiveModel] = Field(default_factory=list)
    point_cloud: Optional[str] = Field(default=None, description="x y z 点群ファイル")


class InitialStateModel(BaseModel):
    """初期全身状態"""

    base: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    arm: List[float] = Field(default_factory=list)

    @field_validator("base")
    @classmethod
    def validate_base(cls, v):
        if len(v) != 3:
            raise ValueError("base needs [x, y, yaw]")
        return [float(x) for x in v]


class MotionKnotModel(BaseModel):
    tau: float = Field(..., ge=0.0)
    pose: PoseModel


class GripperModel(BaseModel):
    tau: float = Field(..., ge=0.0)
    closed: bool


class RegionModel(BaseModel):
    """置き場所の判定領域"""

    center: List[float]
    half_extents: List[float]


class TaskModel(BaseModel):
    """タスク"""

    name: str
    kind: str
    object_pose: PoseModel = Field(..., description="計画に渡す粗い物体姿勢")
    true_pose: Optional[PoseModel] = Field(default=None, description="真の物体姿勢 (省略時は d_σ で摂動)")
    grasps: List[PoseModel] = Field(..., min_length=1)
    duration: float = Field(default=0.0, ge=0.0)
    motion: List[MotionKnotModel] = Field(default_factory=list)
    gripper: List[GripperModel] = Field(default_factory=list)
    couple_to: Optional[str] = Field(default=None, description="把持を引き継ぐ先行タスク名")
    perception: bool = False
    cmz: bool = False
    object_spheres: List[SphereModel] = Field(default_factory=list)
    place_region: Optional[RegionModel] = None

    @field_validator("kind")
    @classmethod
    def validate_kind(cls, v):
        if v not in TASK_KINDS:
            raise ValueError(f"unknown task kind {v}")
        return v


class DisplacementModel(BaseModel):
    d_sigma: float = Field(default=0.0, ge=0.0, description="真値の水平変位 (m)")
    seed: int = 0


class ObstacleModel(BaseModel):
    position: List[float]
    velocity: List[float] = Field(default_factory=lambda: [0.0, 0.0])
    radius: float = Field(..., gt=0.0)


class ScenarioModel(BaseModel):
    """シナリオファイル"""

    version: str = SCENARIO_VERSION
    name: str
    preset: Optional[str] = None
    robot: Optional[str] = Field(default=None, description="ロボット記述のパスまたは同梱名")
    world: WorldModel = Field(default_factory=WorldModel)
    initial_state: InitialStateModel = Field(default_factory=InitialStateModel)
    tasks: List[TaskModel] = Field(..., min_length=1)
    displacement: DisplacementModel = Field(default_factory=DisplacementModel)
    oracle: OracleSettings = Field(default_factory=OracleSettings)
    obstacles: List[ObstacleModel] = Field(default_factory=list)

    @field_validator("version")
    @classmethod
    def validate_version(cls, v):
        if v.split(".")[0] != SCENARIO_VERSION.split(".")[0]:
            raise ValueError(f"unsupported scenario version {v}")
        return v

    @model_validator(mode="after")
    def check_tasks(self):
        """タスク名の一意性と結合先の順序"""
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ValueError("task names must be unique")
        for i, task in enumerate(self.tasks):
            if task.couple_to is not None and task.couple_to not in names[:i]:
                raise ValueError(f"{task.name}: couple_to must name an earlier task")
        return self


# ---- 読み書き ----

def parse_scenario(data: Dict[str, Any]) -> ScenarioModel:
    """
    辞書からシナリオを検証

    Raises:
        ScenarioError: スキーマ違反
    """
    try:
        return ScenarioModel.model_validate(data)
    except PydanticValidationError as e:
        raise ScenarioError("Scenario validation failed", str(e))


def dump_scenario(model: ScenarioModel) -> str:
    """YAML文字列に変換 (parse → dump → parse で同一)"""
    return yaml.safe_dump(model.model_dump(mode="json"), sort_keys=False)


def save_scenario(model: ScenarioModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_scenario(model), encoding="utf-8")
    logger.info(f"Scenario saved: {path}")
    return path


def _preset_path(name: str) -> Path:
    return SCENARIO_DIR / f"{name.replace('-', '_')}.yaml"


def load_scenario(path_or_preset: Union[str, Path]) -> ScenarioModel:
    """
    シナリオの読み込み

    Args:
        path_or_preset: YAMLファイルのパス、またはプリセット名 (simple, office-like)

    Raises:
        ScenarioError: ファイルが無い/不正な場合
    """
    path = Path(path_or_preset)
    if not path.exists():
        if str(path_or_preset) not in PRESETS:
            raise ScenarioError("Scenario not found", str(path_or_preset))
        path = _preset_path(str(path_or_preset))
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ScenarioError("Invalid YAML in scenario", str(e))
    if not isinstance(data, dict):
        raise ScenarioError("Scenario must be a mapping", str(path))
    model = parse_scenario(data)
    logger.info(f"Scenario loaded: {model.name} ({len(model.tasks)} tasks)")
    return model


def preset_scenario(name: str, d_sigma: Optional[float] = None, seed: Optional[int] = None) -> ScenarioModel:
    """プリセットに変位と乱数種を上書き"""
    if name not in PRESETS:
        raise ScenarioError(f"Unknown preset: {name}", f"expected one of {PRESETS}")
    model = load_scenario(name)
    displacement = model.displacement.model_copy(update={
        k: v for k, v in (("d_sigma", d_sigma), ("seed", seed)) if v is not None})
    return model.model_copy(update={"displacement": displacement})


# ---- 実行用 ----

def _pose(model: PoseModel) -> RigidPose:
    return RigidPose.from_xyz_rpy(model.xyz, model.rpy)


def _spheres(models: List[SphereModel]) -> Tuple[Tuple[Tuple[float, float, float], float], ...]:
    return tuple((tuple(s.center), s.radius) for s in models)


def displaced_pose(pose: RigidPose, d_sigma: float, rng: np.random.Generator) -> RigidPose:
    """水平方向にランダムな向きで d_σ だけずらした姿勢"""
    theta = rng.uniform(0.0, 2.0 * math.pi)
    return pose.translated([d_sigma * math.cos(theta), d_sigma * math.sin(theta), 0.0])


@dataclass
class Scenario:
    """
    実行用シナリオ

    tasks の object_pose は計画に渡す粗い姿勢、true_poses は真値。
    couple_to はシナリオ全体でのタスク番号。
    """

    name: str
    desc: RobotDescription
    primitives: List[Primitive]
    point_cloud: Optional[np.ndarray]
    initial_state: WholeBodyState
    tasks: List[TaskSpec]
    true_poses: Dict[str, RigidPose]
    d_sigma: float
    seed: int
    oracle: OracleSettings
    obstacles: List[DynamicObstacle]
    model: ScenarioModel

    def task_index(self, name: str) -> int:
        return next(i for i, t in enumerate(self.tasks) if t.name == name)

    @property
    def missions(self) -> List[List[int]]:
        """グリッパを開くタスク (place/drop/operate) で区切ったミッション"""
        out: List[List[int]] = []
        current: List[int] = []
        for i, task in enumerate(self.tasks):
            current.append(i)
            if not task.holds_object:
                out.append(current)
                current = []
        if current:
            out.append(current)
        return out

    def build_world(self, settings: Optional[WorldSettings] = None) -> EsdfGrid:
        """ESDFを構築 (初期位置とタスク位置を格子に含める)"""
        settings = settings or WorldSettings()
        include = [np.array([*self.initial_state.xy, 0.0])]
        include.extend(t.object_pose.translation for t in self.tasks)
        include.extend(p.translation for p in self.true_poses.values())
        return build_world(self.primitives, settings.resolution, settings.distance_cap, settings.padding,
                           self.point_cloud, np.array(include))


def build_scenario(model: ScenarioModel, base_dir: Optional[Path] = None) -> Scenario:
    """
    スキーマから実行用シナリオを作る

    perception タスクで true_pose が省略されていれば、乱数種から決まる向きに
    d_σ だけ真値をずらす。

    Raises:
        ScenarioError: ロボット記述と初期関節角の次元が合わない場合など
    """
    desc = resolve_description(model.robot, base_dir)
    arm = model.initial_state.arm or [0.0] * desc.joint_count
    if len(arm) != desc.joint_count:
        raise ScenarioError("Initial arm dimension mismatch", f"{len(arm)} != {desc.joint_count}")

    names = [t.name for t in model.tasks]
    rng = np.random.default_rng(model.displacement.seed)
    tasks: List[TaskSpec] = []
    true_poses: Dict[str, RigidPose] = {}
    for tm in model.tasks:
        coarse = _pose(tm.object_pose)
        if tm.true_pose is not None:
            truth = _pose(tm.true_pose)
        elif tm.perception and model.displacement.d_sigma > 0.0:
            truth = displaced_pose(coarse, model.displacement.d_sigma, rng)
        else:
            truth = coarse
        true_poses[tm.name] = truth
        region = (PlaceRegion(tuple(tm.place_region.center), tuple(tm.place_region.half_extents))
                  if tm.place_region is not None else None)
        tasks.append(TaskSpec(
            name=tm.name, kind=tm.kind, object_pose=coarse, grasps=tuple(_pose(g) for g in tm.grasps),
            duration=tm.duration, motion=tuple((k.tau, _pose(k.pose)) for k in tm.motion),
            gripper=tuple(GripperSwitch(g.tau, g.closed) for g in tm.gripper),
            couple_to=names.index(tm.couple_to) if tm.couple_to is not None else None,
            perception=tm.perception, cmz=tm.cmz, object_spheres=_spheres(tm.object_spheres),
            place_region=region))

    cloud = None
    if model.world.point_cloud:
        cloud_path = Path(model.world.point_cloud)
        if base_dir is not None and not cloud_path.is_absolute():
            cloud_path = base_dir / cloud_path
        cloud = load_point_cloud(cloud_path)

    return Scenario(
        name=model.name, desc=desc, primitives=[p.build() for p in model.world.primitives], point_cloud=cloud,
        initial_state=WholeBodyState(model.initial_state.base, arm), tasks=tasks, true_poses=true_poses,
        d_sigma=model.displacement.d_sigma, seed=model.displacement.seed, oracle=model.oracle,
        obstacles=[DynamicObstacle(o.position, o.velocity, o.radius) for o in model.obstacles], model=model)
