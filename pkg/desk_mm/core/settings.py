"""
Desk Mobile Manipulation Toolkit - Settings
全モジュールの調整パラメータの管理とバリデーション
"""

import logging
import math
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml
from pydantic import BaseModel, Field, ValidationError as PydanticValidationError, field_validator, model_validator

from ..exceptions import ConfigurationError

logger = logging.getLogger(__name__)

SETTINGS_VERSION = "1.0"


class GeometrySettings(BaseModel):
    """平滑関数の設定"""

    mu: float = Field(default=0.01, gt=0.0, description="f_log / f_s / f_d_ray の平滑化幅")
    ray_mu: float = Field(default=0.5, gt=0.0, lt=1.0, description="f_d_ray の方向余弦ブレンド幅")


class WorldSettings(BaseModel):
    """環境マップの設定"""

    resolution: float = Field(default=0.05, gt=0.0, description="ESDFボクセル解像度 (m)")
    distance_cap: float = Field(default=5.0, gt=0.0, description="距離の上限値 (m)")
    padding: float = Field(default=0.5, ge=0.0, description="シーン外周の余白 (m)")


class IrmSettings(BaseModel):
    """逆到達可能性マップの設定"""

    base_resolution: float = Field(default=0.05, gt=0.0, description="ベース位置グリッド (m)")
    yaw_bins: int = Field(default=16, ge=1, description="ベースヨー角のビン数")
    position_resolution: float = Field(default=0.05, gt=0.0, description="手先位置ボクセル (m)")
    joint_samples: int = Field(default=7, ge=2, description="関節グリッドの1軸あたりサンプル数")
    chunk_size: int = Field(default=20000, ge=1, description="FK一括計算のチャンクサイズ")
    cache_dir: Optional[str] = Field(default=None, description="IRMキャッシュディレクトリ")


class CmzSettings(BaseModel):
    """CMZサンプリングの設定"""

    radius: float = Field(default=0.05, ge=0.0, description="r_cmz (m)")
    tilt: float = Field(default=0.1, ge=0.0, description="δ_tilt (rad)")
    d_phi: float = Field(default=math.pi / 4, gt=0.0, description="Δφ (rad)")
    d_theta: float = Field(default=math.pi / 4, gt=0.0, description="Δθ (rad)")
    d_psi: float = Field(default=math.pi / 4, gt=0.0, description="Δψ (rad)")
    radius_floor: float = Field(default=0.01, gt=0.0, description="r_cmz縮小の下限 (m)")
    coverage: float = Field(default=0.95, gt=0.0, le=1.0, description="楕円フィットの被覆率")
    sphere_radius: float = Field(default=0.03, gt=0.0, description="サンプル姿勢の衝突球半径 (m)")


class FrontendSettings(BaseModel):
    """フロントエンド探索の設定"""

    keypoint_dt: float = Field(default=0.5, gt=0.0, description="キーポイントの時間間隔 (s)")
    lattice_resolution: float = Field(default=0.1, gt=0.0, description="格子位置解像度 (m)")
    yaw_bins: int = Field(default=16, ge=4, description="格子ヨー角ビン数")
    curvatures: list = Field(default_factory=lambda: [0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0],
                             description="運動プリミティブの曲率 (1/m)")
    arc_length: float = Field(default=0.2, gt=0.0, description="プリミティブの弧長 (m)")
    allow_reverse: bool = Field(default=False, description="後退プリミティブを許可")
    boundary_samples: int = Field(default=64, ge=8, description="楕円境界のサンプル数")
    consistency_lambda: float = Field(default=0.1, ge=0.0, description="λ (m/rad)")
    consistency_threshold: float = Field(default=0.03, gt=0.0, description="δ_thresh (m)")
    consistency_samples: int = Field(default=10, ge=0, description="K")
    max_configs_per_layer: int = Field(default=8, ge=1, description="層あたりのIK解上限")
    ik_seeds: int = Field(default=8, ge=1, description="IKのマルチシード数")
    max_expansions: int = Field(default=20000, ge=1, description="展開ノード数の上限")
    bisection_resolution: float = Field(default=0.05, gt=0.0, description="二分割検査の関節解像度 (rad)")
    d_s: float = Field(default=0.05, ge=0.0, description="環境クリアランス (m)")
    d_self: float = Field(default=0.02, ge=0.0, description="自己干渉クリアランス (m)")


class OptimizerSettings(BaseModel):
    """バックエンド最適化の設定"""

    weight_time: float = Field(default=20.0, ge=0.0, description="ω_T")
    weight_perception: float = Field(default=2.0, ge=0.0, description="ω_Tp")
    samples_per_segment: int = Field(default=16, ge=2, description="n_s")
    visibility_samples: int = Field(default=16, ge=2, description="TAP窓のサンプル数")
    window_samples: int = Field(default=6, ge=2, description="ESI窓のサンプル数")
    initial_duration: float = Field(default=0.5, gt=0.0, description="初期区間時間 (s)")
    d_s: float = Field(default=0.05, ge=0.0)
    d_self: float = Field(default=0.02, ge=0.0)
    d_o: float = Field(default=0.05, gt=0.0)
    d_pos: float = Field(default=0.01, gt=0.0)
    d_m: float = Field(default=0.08, ge=0.0)
    alpha_m: float = Field(default=0.5, gt=0.0, lt=1.0)
    d_ela: float = Field(default=5e-3, ge=0.0)
    tp_min: float = Field(default=3.0, gt=0.0)
    d_ee_v: float = Field(default=0.05, gt=0.0, description="瞬時タスクの手先速度許容 (m/s)")
    d_ee_w: float = Field(default=0.1, gt=0.0, description="瞬時タスクの手先角速度許容 (rad/s)")
    fov_half_angle: float = Field(default=0.6, gt=0.0, lt=math.pi / 2, description="θ_fov (rad)")
    max_range: float = Field(default=1.5, gt=0.0, description="d_max (m)")
    occlusion_spheres: int = Field(default=8, ge=2, description="K_v")
    target_radius: float = Field(default=0.04, gt=0.0, description="r_tgt (m)")
    enable_tap: bool = True
    enable_cmz: bool = True
    enable_esi: bool = True
    enable_ecs: bool = True


class AlmSettings(BaseModel):
    """拡張ラグランジュ法の設定"""

    rho_init: float = Field(default=1.0, gt=0.0)
    gamma: float = Field(default=10.0, gt=1.0)
    rho_max: float = Field(default=1e6, gt=0.0)
    violation_decrease: float = Field(default=0.25, gt=0.0, lt=1.0, description="十分減少の比率")
    eps_cons: float = Field(default=1e-3, gt=0.0)
    eps_grad: float = Field(default=1e-4, gt=0.0)
    max_outer: int = Field(default=20, ge=1)
    max_inner: int = Field(default=200, ge=1)
    lbfgs_memory: int = Field(default=10, ge=1)


class ControllerSettings(BaseModel):
    """カスケードMPCの設定"""

    horizon: int = Field(default=10, ge=1, description="N")
    dt: float = Field(default=0.05, gt=0.0, description="Δt (s)")
    switch_duration: float = Field(default=0.3, gt=0.0, description="T_sw (s)")
    q_base: list = Field(default_factory=lambda: [20.0, 20.0, 5.0, 1.0, 1.0])
    q_base_terminal: list = Field(default_factory=lambda: [40.0, 40.0, 10.0, 2.0, 2.0])
    r_base: list = Field(default_factory=lambda: [0.1, 0.1])
    q_arm: float = Field(default=10.0, ge=0.0)
    q_arm_velocity: float = Field(default=0.5, ge=0.0)
    r_arm: float = Field(default=0.01, ge=0.0)
    q_task_position: float = Field(default=200.0, ge=0.0, description="Q_p")
    weight_rotation: float = Field(default=5.0, ge=0.0, description="ω_R")
    weight_obstacle: float = Field(default=100.0, ge=0.0, description="ω_dy")
    obstacle_margin: float = Field(default=0.3, ge=0.0, description="d_s,0 (m)")
    state_penalty: float = Field(default=1e3, ge=0.0, description="状態上下限のペナルティ")
    v_max: float = Field(default=0.6, gt=0.0)
    w_max: float = Field(default=1.5, gt=0.0)
    a_max: float = Field(default=1.0, gt=0.0)
    alpha_max: float = Field(default=3.0, gt=0.0)
    max_iterations: int = Field(default=30, ge=1)
    hold_decay: float = Field(default=0.5, ge=0.0, le=1.0)
    enable_warping: bool = True

    @field_validator("q_base", "q_base_terminal")
    @classmethod
    def validate_base_weights(cls, v):
        """ベース状態重みのバリデーション"""
        if len(v) != 5 or any(w < 0 for w in v):
            raise ValueError("base state weights must be 5 non-negative values")
        return [float(w) for w in v]

    @field_validator("r_base")
    @classmethod
    def validate_input_weights(cls, v):
        """ベース入力重みのバリデーション"""
        if len(v) != 2 or any(w < 0 for w in v):
            raise ValueError("base input weights must be 2 non-negative values")
        return [float(w) for w in v]


class OracleSettings(BaseModel):
    """姿勢オラクルの設定"""

    rate: float = Field(default=5.0, gt=0.0, description="更新レート (Hz)")
    init_delay: float = Field(default=1.0, ge=0.0, description="初回推定までの可視時間 (s)")
    sigma_pos: float = Field(default=0.005, ge=0.0, description="位置ノイズ (m)")
    sigma_rot: float = Field(default=0.01, ge=0.0, description="回転ノイズ (rad)")


class SimSettings(BaseModel):
    """閉ループシミュレーションの設定"""

    control_rate: float = Field(default=50.0, gt=0.0, description="制御周期 (Hz)")
    substep_rate: float = Field(default=1000.0, gt=0.0, description="積分サブステップ (Hz)")
    replan_period: float = Field(default=1.4, gt=0.0, description="再計画周期 (s)")
    replan_delay: float = Field(default=2.5, ge=0.0, description="先行タスク後の初回再計画 (s)")
    real_time_factor: float = Field(default=0.0, ge=0.0, description="計画時間の仮想時間への換算")
    replan_budget: float = Field(default=5.0, gt=0.0, description="再計画の時間予算 (s)")
    active_tasks: int = Field(default=2, ge=1, description="N_T")
    max_gripper_cycles: int = Field(default=6, ge=1)
    stuck_window: float = Field(default=30.0, gt=0.0)
    stuck_distance: float = Field(default=0.15, ge=0.0)
    max_duration: float = Field(default=300.0, gt=0.0)
    command_noise: float = Field(default=0.0, ge=0.0)
    grasp_position_tolerance: float = Field(default=0.03, gt=0.0)
    grasp_orientation_tolerance: float = Field(default=0.2, gt=0.0)
    success_distance: float = Field(default=0.15, gt=0.0)
    success_tilt: float = Field(default=math.radians(45.0), gt=0.0)
    ideal_grid_resolution: float = Field(default=0.1, gt=0.0)
    max_base_speed: float = Field(default=0.6, gt=0.0)
    collision_tolerance: float = Field(default=0.02, ge=0.0, description="ESDF侵入の許容量 (m)")


class ToolkitSettings(BaseModel):
    """全体設定"""

    version: str = Field(default=SETTINGS_VERSION, description="設定フォーマットのバージョン")
    geometry: GeometrySettings = Field(default_factory=GeometrySettings)
    world: WorldSettings = Field(default_factory=WorldSettings)
    irm: IrmSettings = Field(default_factory=IrmSettings)
    cmz: CmzSettings = Field(default_factory=CmzSettings)
    frontend: FrontendSettings = Field(default_factory=FrontendSettings)
    optimizer: OptimizerSettings = Field(default_factory=OptimizerSettings)
    alm: AlmSettings = Field(default_factory=AlmSettings)
    controller: ControllerSettings = Field(default_factory=ControllerSettings)
    oracle: OracleSettings = Field(default_factory=OracleSettings)
    sim: SimSettings = Field(default_factory=SimSettings)

    @field_validator("version")
    @classmethod
    def validate_version(cls, v):
        """バージョンのバリデーション"""
        if v.split(".")[0] != SETTINGS_VERSION.split(".")[0]:
            raise ValueError(f"unsupported settings version {v}")
        return v

    @model_validator(mode="after")
    def check_margins(self):
        """CMZ縮小下限と半径の整合性"""
        if self.cmz.radius > 0 and self.cmz.radius < self.cmz.radius_floor:
            logger.warning("cmz.radius below radius_floor; CMZ reduction disabled")
        return self


def load_settings(path: Optional[Union[str, Path]] = None) -> ToolkitSettings:
    """
    設定ファイルの読み込み

    Args:
        path: YAML設定ファイルのパス。Noneの場合はデフォルト値

    Returns:
        検証済みの設定

    Raises:
        ConfigurationError: 読み込みまたはバリデーションに失敗した場合
    """
    if path is None:
        logger.info("Using default settings")
        return ToolkitSettings()

    config_path = Path(path)
    if not config_path.exists():
        logger.warning(f"Settings file not found, using defaults: {config_path}")
        return ToolkitSettings()

    try:
        with open(config_path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError("Invalid YAML in settings file", str(e))

    if not isinstance(data, dict):
        raise ConfigurationError("Settings file must contain a mapping", str(config_path))

    try:
        settings = ToolkitSettings(**data)
    except PydanticValidationError as e:
        raise ConfigurationError("Settings validation failed", str(e))

    logger.info(f"Settings loaded from: {config_path}")
    return settings


def dump_settings(settings: ToolkitSettings) -> Dict[str, Any]:
    """設定を辞書形式に変換"""
    return settings.model_dump()
