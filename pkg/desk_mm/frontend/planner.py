"""
Desk Mobile Manipulation Toolkit - Frontend Planner
キーポイント化・到達楕円・ベース探索・アーム探索の統合
"""

import logging
import time
from typing import List, Optional, Sequence

from ..core.settings import FrontendSettings
from ..geometry.ellipse import Ellipse2
from ..reachability.cmz import keypoint_ellipse
from ..reachability.irm import InverseReachabilityMap
from ..robot.description import RobotDescription
from ..robot.state import WholeBodyState
from ..world.esdf import EsdfGrid
from .arm_search import WholeBodyPath, search_arm_path
from .base_search import search_base_path
from .tasks import TaskSpec, discretize_tasks

logger = logging.getLogger(__name__)


class FrontendPlanner:
    """階層的な全身経路の初期化器"""

    def __init__(self, desc: RobotDescription, irm: InverseReachabilityMap,
                 settings: Optional[FrontendSettings] = None, workers: int = 1):
        """
        初期化

        Args:
            desc: ロボット記述
            irm: 逆到達可能性マップ
            settings: 探索設定
            workers: 辺判定の並列数
        """
        self.desc = desc
        self.irm = irm
        self.settings = settings or FrontendSettings()
        self.workers = workers
        self.last_duration_ms = 0.0
        logger.info("FrontendPlanner initialized")

    def ellipses(self, tasks: Sequence[TaskSpec], keypoints) -> List[Ellipse2]:
        return [keypoint_ellipse(kp.pose, tasks[kp.task_index].grasps, self.irm) for kp in keypoints]

    def plan(self, start: WholeBodyState, tasks: Sequence[TaskSpec], world: Optional[EsdfGrid],
             initial_grasps: Optional[Sequence[int]] = None) -> WholeBodyPath:
        """
        全身経路の計画

        Raises:
            UnreachableTaskError: 到達可能な把持が無いキーポイント
            SearchFailure: ベース探索の失敗
            ArmSearchFailure: アーム探索の失敗
        """
        begin = time.perf_counter()
        keypoints = discretize_tasks(tasks, self.settings.keypoint_dt)
        ellipses = self.ellipses(tasks, keypoints)
        base = search_base_path(self.desc, start, keypoints, ellipses, world, tasks, self.settings,
                                initial_grasps)
        path = search_arm_path(self.desc, base, start.arm, world, keypoints, tasks, self.settings,
                               self.workers)
        self.last_duration_ms = (time.perf_counter() - begin) * 1000.0
        logger.info(f"Frontend planned {len(keypoints)} keypoints in {self.last_duration_ms:.1f} ms")
        return path
