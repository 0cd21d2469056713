"""
Desk Mobile Manipulation Toolkit - Sequential-Progress Hybrid A*
進捗インデックスで拡張したHybrid A*によるベース経路探索
"""

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..core.settings import FrontendSettings
from ..exceptions import SearchFailure
from ..geometry.ellipse import Ellipse2
from ..robot.description import RobotDescription
from ..robot.ik import solve_ik
from ..robot.state import WholeBodyState
from ..world.esdf import EsdfGrid
from .feasibility import base_clear, check_task_consistency, state_clear
from .heuristic import progress_heuristic
from .tasks import Keypoint, TaskSpec, continues_from

logger = logging.getLogger(__name__)

ConfigSet = List[Tuple[np.ndarray, int]]  # (関節角, 把持番号)


@dataclass(frozen=True)
class MotionPrimitive:
    """一定曲率の円弧 (length < 0 で後退)"""

    curvature: float
    length: float

    def apply(self, pose: Sequence[float], samples: int = 4) -> Tuple[np.ndarray, np.ndarray]:
        """
        円弧の終端姿勢と途中姿勢

        Returns:
            (終端 (x, y, ψ), samples×3 の途中姿勢 (終端を含む))
        """
        x, y, psi = (float(v) for v in pose)
        s = np.linspace(self.length / samples, self.length, samples)
        if abs(self.curvature) < 1e-12:
            xs = x + s * np.cos(psi)
            ys = y + s * np.sin(psi)
            psis = np.full(samples, psi)
        else:
            psis = psi + self.curvature * s
            xs = x + (np.sin(psis) - np.sin(psi)) / self.curvature
            ys = y - (np.cos(psis) - np.cos(psi)) / self.curvature
        arc = np.column_stack([xs, ys, np.angle(np.exp(1j * psis))])
        return arc[-1].copy(), arc


def motion_primitives(settings: FrontendSettings) -> List[MotionPrimitive]:
    prims = [MotionPrimitive(float(c), settings.arc_length) for c in settings.curvatures]
    if settings.allow_reverse:
        prims.extend(MotionPrimitive(float(c), -settings.arc_length) for c in settings.curvatures)
    return prims


@dataclass(eq=False)
class SearchNode:
    """探索ノード (ベース姿勢 + 進捗インデックス 𝔫)"""

    pose: np.ndarray
    progress: int
    g: float
    h: float
    q_valid: ConfigSet = field(default_factory=list)
    c_valid: List[int] = field(default_factory=list)
    parent: Optional["SearchNode"] = None
    arc: Optional[np.ndarray] = None
    reached: int = -1

    @property
    def f(self) -> float:
        return self.g + self.h

    @property
    def is_key(self) -> bool:
        return bool(self.q_valid)

    def chain(self) -> List["SearchNode"]:
        """根からこのノードまで"""
        nodes = []
        node: Optional[SearchNode] = self
        while node is not None:
            nodes.append(node)
            node = node.parent
        return nodes[::-1]


@dataclass
class BasePathResult:
    """ベース経路・キー経由点番号 κ・キーポイントごとの関節角集合"""

    poses: np.ndarray
    kappa: List[int]
    q_sets: List[ConfigSet]
    cost: float
    expanded: int
    goal: SearchNode


ReachabilityFn = Callable[[np.ndarray, SearchNode, np.ndarray, int], Tuple[ConfigSet, List[int]]]


def _base_segment(node: SearchNode, ancestor: SearchNode, arc: np.ndarray) -> np.ndarray:
    """ancestor から node を経て候補 arc までのベース姿勢列"""
    parts = [arc]
    walk: Optional[SearchNode] = node
    while walk is not None and walk is not ancestor:
        if walk.arc is not None:
            parts.append(walk.arc)
        walk = walk.parent
    parts.append(ancestor.pose[None, :])
    return np.vstack(parts[::-1])


def verify_reachability(desc: RobotDescription, pose: np.ndarray, node: SearchNode, arc: np.ndarray,
                        k: int, keypoints: Sequence[Keypoint], ellipse: Ellipse2,
                        world: Optional[EsdfGrid], tasks: Sequence[TaskSpec],
                        settings: FrontendSettings) -> Tuple[ConfigSet, List[int]]:
    """
    到達性検証 (幾何フィルタ → 把持継承 → IK・実行可能性)

    Args:
        pose: 候補ベース姿勢
        node: 候補の親ノード
        arc: 親から候補までのベース姿勢列
        k: 対象キーポイント番号 (0始まり)

    Returns:
        (Q_valid, C_valid)。空なら進捗なし
    """
    if not ellipse.contains(pose[:2]):
        return [], []
    kp = keypoints[k]
    task = tasks[kp.task_index]

    inherit = continues_from(keypoints, tasks, k)
    key_node: Optional[SearchNode] = None
    candidates = list(range(len(task.grasps)))
    if inherit is not None:
        walk: Optional[SearchNode] = node
        last = node
        while walk is not None:
            if walk.reached >= 0 and keypoints[walk.reached].task_index == inherit:
                break
            last = walk
            walk = walk.parent
        if walk is not None:
            key_node = walk
            candidates = list(walk.c_valid)
        elif last.c_valid:
            candidates = [g for g in last.c_valid if g < len(task.grasps)]

    check_consistency = (key_node is not None and not kp.is_task_start and key_node.reached == k - 1
                         and settings.consistency_samples > 0)
    segment = _base_segment(node, key_node, arc) if check_consistency else None
    task_poses = None
    if check_consistency:
        prev_tau = keypoints[k - 1].tau
        taus = np.linspace(prev_tau, kp.tau, settings.consistency_samples + 1)
        task_poses = [task.object_pose_at(t) for t in taus]

    q_valid: ConfigSet = []
    c_valid: List[int] = []
    for g in candidates:
        seed = None
        if key_node is not None:
            seed = next((q for q, gq in key_node.q_valid if gq == g), None)
        target = kp.pose @ task.grasps[g]
        for q in solve_ik(desc, target, pose, seed, seeds=settings.ik_seeds):
            if not state_clear(desc, pose, q, world, settings.d_s, settings.d_self):
                continue
            if check_consistency:
                starts = [qs for qs, gs in key_node.q_valid if gs == g]
                if not any(check_task_consistency(desc, segment, qs, q, task_poses, task.grasps[g],
                                                  settings.consistency_lambda,
                                                  settings.consistency_threshold) for qs in starts):
                    continue
            q_valid.append((q, g))
            if g not in c_valid:
                c_valid.append(g)
    return q_valid, c_valid


def _lattice_key(node: SearchNode, settings: FrontendSettings) -> Tuple[int, int, int, int]:
    res = settings.lattice_resolution
    yaw_bin = int(np.round(node.pose[2] / (2.0 * np.pi / settings.yaw_bins))) % settings.yaw_bins
    return (int(np.round(node.pose[0] / res)), int(np.round(node.pose[1] / res)), yaw_bin, node.progress)


def _backtrack(goal: SearchNode, count: int, expanded: int) -> BasePathResult:
    poses: List[np.ndarray] = []
    kappa = [0] * count
    q_sets: List[ConfigSet] = [[] for _ in range(count)]
    for node in goal.chain():
        dwell = node.parent is not None and node.arc is not None and len(node.arc) == 1 \
            and np.allclose(node.pose, node.parent.pose)
        if not dwell:
            poses.append(node.pose.copy())
        if node.reached >= 0:
            kappa[node.reached] = len(poses) - 1
            q_sets[node.reached] = list(node.q_valid)
    return BasePathResult(np.array(poses), kappa, q_sets, goal.g, expanded, goal)


def search_base_path(desc: RobotDescription, start: WholeBodyState, keypoints: Sequence[Keypoint],
                     ellipses: Sequence[Ellipse2], world: Optional[EsdfGrid], tasks: Sequence[TaskSpec],
                     settings: Optional[FrontendSettings] = None,
                     initial_grasps: Optional[Sequence[int]] = None,
                     reachability_fn: Optional[ReachabilityFn] = None,
                     use_heuristic: bool = True) -> BasePathResult:
    """
    逐次進捗Hybrid A*

    Args:
        start: 初期全身状態
        keypoints: キーポイント列 (非空)
        ellipses: キーポイントごとの到達楕円
        initial_grasps: 把持中物体の把持番号 (C_init)
        reachability_fn: 到達性検証の差し替え (既定は verify_reachability)
        use_heuristic: False なら h=0 (網羅探索)

    Returns:
        BasePathResult

    Raises:
        SearchFailure: オープン集合が尽きた、または展開上限
    """
    settings = settings or FrontendSettings()
    count = len(keypoints)
    if count == 0:
        raise SearchFailure("No keypoints to visit")
    if not base_clear(desc, start.base, world, settings.d_s):
        raise SearchFailure("Start pose is in collision", f"base={start.base.tolist()}",
                            best_progress=0, expanded_nodes=0)

    if reachability_fn is None:
        def reachability_fn(pose, node, arc, k):
            return verify_reachability(desc, pose, node, arc, k, keypoints, ellipses[k], world, tasks, settings)

    def heuristic(pose, progress):
        if not use_heuristic:
            return 0.0
        return progress_heuristic(pose[:2], progress, ellipses, settings.boundary_samples)

    primitives = motion_primitives(settings)
    root = SearchNode(start.base.copy(), 1, 0.0, heuristic(start.base, 1),
                      [(start.arm.copy(), -1)], list(initial_grasps or []))
    counter = itertools.count()
    open_set = [(root.f, root.h, -root.progress, next(counter), root)]
    closed = set()
    best = root
    expanded = 0

    while open_set:
        _, _, _, _, node = heapq.heappop(open_set)
        key = _lattice_key(node, settings)
        if key in closed:
            continue
        closed.add(key)
        expanded += 1
        if node.progress == count + 1:
            logger.info(f"Base search succeeded: cost={node.g:.2f} m, expanded={expanded}")
            return _backtrack(node, count, expanded)
        if node.progress > best.progress or (node.progress == best.progress and node.h < best.h):
            best = node
        if expanded >= settings.max_expansions:
            break

        k = node.progress - 1
        successors = [(node.pose.copy(), node.pose[None, :].copy(), 0.0, True)]
        for prim in primitives:
            end, arc = prim.apply(node.pose)
            if all(base_clear(desc, p, world, settings.d_s) for p in arc):
                successors.append((end, arc, abs(prim.length), False))

        for pose, arc, step, dwell in successors:
            q_valid, c_valid = reachability_fn(pose, node, arc, k)
            if dwell and not q_valid:
                continue
            progress = node.progress + 1 if q_valid else node.progress
            child = SearchNode(pose, progress, node.g + step, heuristic(pose, progress),
                               q_valid, c_valid, node, arc, k if q_valid else -1)
            if _lattice_key(child, settings) in closed:
                continue
            heapq.heappush(open_set, (child.f, child.h, -child.progress, next(counter), child))

    raise SearchFailure("Base path search exhausted",
                        f"best progress {best.progress - 1}/{count} after {expanded} expansions",
                        best_progress=best.progress - 1, expanded_nodes=expanded)
