"""
Desk Mobile Manipulation Toolkit - Layered-graph Arm Search
ベース経路に条件付けた層状グラフ上のマニピュレータ経路探索
"""

import heapq
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.settings import FrontendSettings
from ..exceptions import ArmSearchFailure
from ..robot.description import RobotDescription
from ..robot.state import WholeBodyState
from ..world.esdf import EsdfGrid
from .base_search import BasePathResult
from .feasibility import check_task_consistency, state_clear
from .tasks import Keypoint, TaskSpec, continues_from

logger = logging.getLogger(__name__)

NodeId = Tuple[int, int]  # (層, 層内番号)


@dataclass
class LayerNode:
    """層のノード: 関節角と把持番号"""

    q: np.ndarray
    grasp: int


@dataclass
class GraphEdge:
    """隣接層間の辺 (局所経路をキャッシュ)"""

    source: NodeId
    target: NodeId
    cost: float
    path: np.ndarray


@dataclass
class LayeredGraph:
    layers: List[List[LayerNode]]
    edges: Dict[NodeId, List[GraphEdge]] = field(default_factory=dict)

    @property
    def edge_count(self) -> int:
        return sum(len(v) for v in self.edges.values())


@dataclass
class WholeBodyPath:
    """離散全身経路 x_0..x_M とタスク区間・選択把持"""

    states: List[WholeBodyState]
    kappa: List[int]
    phases: List[Tuple[int, int]]
    grasps: List[int]
    keypoints: List[Keypoint]
    cost: float = 0.0

    @property
    def waypoint_count(self) -> int:
        return len(self.states)

    def to_dict(self) -> Dict[str, Any]:
        """ウォームスタート束の辞書形式"""
        return {
            "states": [s.to_dict() for s in self.states],
            "kappa": [int(k) for k in self.kappa],
            "phases": [[int(a), int(b)] for a, b in self.phases],
            "grasps": [int(g) for g in self.grasps],
            "keypoints": [{"task": kp.task_index, "tau": kp.tau, "local": kp.local_index,
                           "pose": kp.pose.to_dict()} for kp in self.keypoints],
            "cost": float(self.cost),
        }


def joint_limit_margin(desc: RobotDescription, q: np.ndarray) -> float:
    return float(np.min(np.minimum(q - desc.q_min, desc.q_max - q)))


def _interval_clear(desc: RobotDescription, base_a: np.ndarray, base_b: np.ndarray,
                    q_a: np.ndarray, q_b: np.ndarray, world: Optional[EsdfGrid],
                    settings: FrontendSettings, depth: int = 0) -> bool:
    """中点を再帰的に検査 (関節差が解像度以下になるまで)"""
    if np.max(np.abs(q_b - q_a)) <= settings.bisection_resolution or depth > 12:
        return True
    base_m = 0.5 * (base_a + base_b)
    base_m[2] = base_a[2] + 0.5 * np.angle(np.exp(1j * (base_b[2] - base_a[2])))
    q_m = 0.5 * (q_a + q_b)
    if not state_clear(desc, base_m, q_m, world, settings.d_s, settings.d_self):
        return False
    return (_interval_clear(desc, base_a, base_m, q_a, q_m, world, settings, depth + 1)
            and _interval_clear(desc, base_m, base_b, q_m, q_b, world, settings, depth + 1))


def local_arm_path(desc: RobotDescription, bases: np.ndarray, q_a: np.ndarray, q_b: np.ndarray,
                   world: Optional[EsdfGrid], settings: FrontendSettings) -> Optional[np.ndarray]:
    """
    ベースの同時運動の下で関節空間線形補間の局所経路

    Args:
        bases: 区間のベース姿勢列 (先頭は q_a 側)

    Returns:
        各ベース姿勢での関節角 (len(bases)×L)。衝突すれば None
    """
    n = len(bases) - 1
    if n <= 0:
        bases = np.vstack([bases[:1], bases[:1]])
        n = 1
    path = np.array([q_a + (i / n) * (q_b - q_a) for i in range(n + 1)])
    for i in range(1, n + 1):
        if not state_clear(desc, bases[i], path[i], world, settings.d_s, settings.d_self):
            return None
        if not _interval_clear(desc, bases[i - 1], bases[i], path[i - 1], path[i], world, settings):
            return None
    return path


def _segment_bases(base: BasePathResult, start: int, end: int) -> np.ndarray:
    return base.poses[start:end + 1] if end > start else base.poses[end:end + 1]


def build_layered_graph(desc: RobotDescription, base: BasePathResult, start_arm: np.ndarray,
                        world: Optional[EsdfGrid], keypoints: Sequence[Keypoint],
                        tasks: Sequence[TaskSpec], settings: FrontendSettings,
                        workers: int = 1) -> LayeredGraph:
    """層状グラフの構築 (辺の存在判定は独立なので並列化可能)"""
    layers: List[List[LayerNode]] = [[LayerNode(np.asarray(start_arm, dtype=float), -1)]]
    for configs in base.q_sets:
        ranked = sorted(configs, key=lambda item: -joint_limit_margin(desc, item[0]))
        layers.append([LayerNode(q, g) for q, g in ranked[:settings.max_configs_per_layer]])

    kappa = [0] + list(base.kappa)
    jobs = []
    for layer in range(len(layers) - 1):
        k = layer  # 到達先キーポイント番号
        kp = keypoints[k]
        inherit = continues_from(keypoints, tasks, k)
        grasp_locked = layer > 0 and inherit is not None and keypoints[k - 1].task_index == inherit
        consistency = grasp_locked and not kp.is_task_start and settings.consistency_samples > 0
        bases = _segment_bases(base, kappa[layer], kappa[layer + 1])
        for i, a in enumerate(layers[layer]):
            for j, b in enumerate(layers[layer + 1]):
                if grasp_locked and a.grasp != b.grasp:
                    continue
                jobs.append((layer, i, j, bases, consistency))

    def evaluate(job) -> Optional[GraphEdge]:
        layer, i, j, bases, consistency = job
        a = layers[layer][i]
        b = layers[layer + 1][j]
        path = local_arm_path(desc, bases, a.q, b.q, world, settings)
        if path is None:
            return None
        if consistency:
            kp = keypoints[layer]
            task = tasks[kp.task_index]
            taus = np.linspace(keypoints[layer - 1].tau, kp.tau, settings.consistency_samples + 1)
            if not check_task_consistency(desc, bases, a.q, b.q, [task.object_pose_at(t) for t in taus],
                                          task.grasps[b.grasp], settings.consistency_lambda,
                                          settings.consistency_threshold):
                return None
        return GraphEdge((layer, i), (layer + 1, j), float(np.linalg.norm(b.q - a.q)), path)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, jobs))
    else:
        results = [evaluate(job) for job in jobs]

    graph = LayeredGraph(layers)
    for edge in results:
        if edge is not None:
            graph.edges.setdefault(edge.source, []).append(edge)
    logger.debug(f"Layered graph: {len(layers)} layers, {graph.edge_count} edges")
    return graph


def _dijkstra(graph: LayeredGraph) -> Tuple[Dict[NodeId, float], Dict[NodeId, GraphEdge]]:
    dist: Dict[NodeId, float] = {(0, 0): 0.0}
    prev: Dict[NodeId, GraphEdge] = {}
    heap = [(0.0, (0, 0))]
    while heap:
        d, node = heapq.heappop(heap)
        if d > dist.get(node, np.inf):
            continue
        for edge in graph.edges.get(node, []):
            nd = d + edge.cost
            if nd < dist.get(edge.target, np.inf):
                dist[edge.target] = nd
                prev[edge.target] = edge
                heapq.heappush(heap, (nd, edge.target))
    return dist, prev


def search_arm_path(desc: RobotDescription, base: BasePathResult, start_arm: Sequence[float],
                    world: Optional[EsdfGrid], keypoints: Sequence[Keypoint], tasks: Sequence[TaskSpec],
                    settings: Optional[FrontendSettings] = None, workers: int = 1) -> WholeBodyPath:
    """
    層状グラフの最短経路から全身経路を合成

    Returns:
        WholeBodyPath (同一経由点を共有するキーポイントには重複経由点を挿入)

    Raises:
        ArmSearchFailure: 到達可能なノードが無い層がある
    """
    settings = settings or FrontendSettings()
    start_arm = np.asarray(start_arm, dtype=float)
    graph = build_layered_graph(desc, base, start_arm, world, keypoints, tasks, settings, workers)
    dist, prev = _dijkstra(graph)

    last = len(graph.layers) - 1
    for layer in range(1, last + 1):
        if not any((layer, j) in dist for j in range(len(graph.layers[layer]))):
            raise ArmSearchFailure("No feasible arm transition into layer", f"layer {layer}", layer=layer)
    goal = min(((last, j) for j in range(len(graph.layers[last])) if (last, j) in dist),
               key=lambda n: dist[n])

    edges: List[GraphEdge] = []
    node = goal
    while node in prev:
        edges.append(prev[node])
        node = prev[node].source
    edges.reverse()

    kappa_in = [0] + list(base.kappa)
    states = [WholeBodyState(base.poses[0], start_arm)]
    kappa: List[int] = []
    chosen: List[LayerNode] = []
    for layer, edge in enumerate(edges):
        lo, hi = kappa_in[layer], kappa_in[layer + 1]
        indices = list(range(lo + 1, hi + 1)) or [hi]
        a = graph.layers[layer][edge.source[1]]
        b = graph.layers[layer + 1][edge.target[1]]
        for step, w in enumerate(indices, start=1):
            arm = a.q + (step / len(indices)) * (b.q - a.q)
            states.append(WholeBodyState(base.poses[w], arm))
        kappa.append(len(states) - 1)
        chosen.append(b)
    # ESIの退避区間のための終端経由点
    states.append(WholeBodyState(states[-1].base, states[-1].arm))

    phases: List[Tuple[int, int]] = []
    grasps: List[int] = []
    for index in range(len(tasks)):
        ks = [k for k, kp in enumerate(keypoints) if kp.task_index == index]
        if not ks:
            phases.append((-1, -1))
            grasps.append(-1)
            continue
        phases.append((kappa[ks[0]], kappa[ks[-1]]))
        grasps.append(chosen[ks[0]].grasp)

    total = float(sum(e.cost for e in edges))
    logger.info(f"Arm search succeeded: {len(states)} waypoints, joint path length {total:.3f} rad")
    return WholeBodyPath(states, kappa, phases, grasps, list(keypoints), total)
