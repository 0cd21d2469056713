"""
Desk Mobile Manipulation Toolkit - Minimum-effort Piecewise Polynomial
最小制御努力の区分多項式軌道 (帯行列による係数写像と随伴勾配)
"""

import logging
from dataclasses import dataclass, field
from math import factorial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_banded

from ..exceptions import DomainError, ParameterError

logger = logging.getLogger(__name__)


def basis(tau: float, order: int, n_coef: int) -> np.ndarray:
    """β^(order)(τ) = d^order/dτ^order [1, τ, …, τ^(n_coef−1)]"""
    out = np.zeros(n_coef)
    for k in range(order, n_coef):
        out[k] = factorial(k) / factorial(k - order) * tau ** (k - order)
    return out


@dataclass(frozen=True)
class BoundaryCondition:
    """端点条件: 位置と s−1 階までの微分"""

    position: np.ndarray
    derivatives: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(-1)
        der = np.asarray(self.derivatives, dtype=float).reshape(-1, len(pos))
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "derivatives", der)

    @classmethod
    def at_rest(cls, position: Sequence[float], s: int = 3) -> "BoundaryCondition":
        pos = np.asarray(position, dtype=float)
        return cls(pos, np.zeros((s - 1, len(pos))))

    def row(self, order: int) -> np.ndarray:
        if order == 0:
            return self.position
        if order - 1 < len(self.derivatives):
            return self.derivatives[order - 1]
        return np.zeros_like(self.position)


@dataclass
class _BandedSystem:
    """係数写像 M(T)·C = b の帯格納"""

    size: int
    bandwidth: int
    entries: List[Tuple[int, int, float]]

    def _storage(self, transpose: bool) -> np.ndarray:
        ab = np.zeros((2 * self.bandwidth + 1, self.size))
        for r, c, val in self.entries:
            if transpose:
                r, c = c, r
            ab[self.bandwidth + r - c, c] += val
        return ab

    def solve(self, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        ab = self._storage(transpose)
        return solve_banded((self.bandwidth, self.bandwidth), ab, rhs)


def _assemble(durations: np.ndarray, s: int) -> _BandedSystem:
    n = 2 * s
    M = len(durations)
    entries: List[Tuple[int, int, float]] = []
    for d in range(s):
        entries.append((d, d, float(factorial(d))))
    for j in range(M - 1):
        row = s + n * j
        end = basis(durations[j], 0, n)
        entries.extend((row, n * j + k, end[k]) for k in range(n) if end[k] != 0.0)
        for d in range(n - 1):
            end = basis(durations[j], d, n)
            entries.extend((row + 1 + d, n * j + k, end[k]) for k in range(n) if end[k] != 0.0)
            entries.append((row + 1 + d, n * (j + 1) + d, -float(factorial(d))))
    row = s + n * (M - 1)
    for d in range(s):
        end = basis(durations[-1], d, n)
        entries.extend((row + d, n * (M - 1) + k, end[k]) for k in range(n) if end[k] != 0.0)
    return _BandedSystem(n * M, 3 * s - 1, entries)


@dataclass
class PiecewiseTrajectory:
    """M区間・次数 2s−1 の区分多項式軌道"""

    coeffs: np.ndarray  # (M, 2s, dim)
    durations: np.ndarray
    s: int
    waypoints: np.ndarray
    start: BoundaryCondition
    end: BoundaryCondition
    perception_durations: Dict[int, float] = field(default_factory=dict)
    _system: Optional[_BandedSystem] = field(default=None, repr=False)

    @property
    def segment_count(self) -> int:
        return len(self.durations)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[2]

    @property
    def times(self) -> np.ndarray:
        """区間境界時刻 t̄_0..t̄_M"""
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    @property
    def total_duration(self) -> float:
        return float(np.sum(self.durations))

    def locate(self, t: float) -> Tuple[int, float]:
        """
        時刻から (区間番号, 区間内時刻)

        境界上の t は右側区間、t = t̄_M は最終区間。

        Raises:
            DomainError: 範囲外
        """
        total = self.total_duration
        if t < -1e-9 or t > total + 1e-9:
            raise DomainError("Time outside trajectory span", f"t={t}, span=[0, {total}]")
        times = self.times
        idx = int(np.searchsorted(times, t, side="right") - 1)
        idx = min(max(idx, 0), self.segment_count - 1)
        return idx, min(max(t - times[idx], 0.0), float(self.durations[idx]))

    def eval_segment(self, index: int, tau: float, order: int = 0) -> np.ndarray:
        if order < 0:
            raise DomainError("Derivative order must be non-negative", str(order))
        n = 2 * self.s
        if order >= n:
            return np.zeros(self.dim)
        return basis(tau, order, n) @ self.coeffs[index]

    def eval(self, t: float, order: int = 0) -> np.ndarray:
        """
        q^(order)(t)

        Args:
            t: 時刻 (s)
            order: 微分階数

        Returns:
            dim次元ベクトル
        """
        index, tau = self.locate(t)
        return self.eval_segment(index, tau, order)

    def sample(self, times: Sequence[float], order: int = 0) -> np.ndarray:
        return np.array([self.eval(t, order) for t in times])

    def with_perception(self, perception: Dict[int, float]) -> "PiecewiseTrajectory":
        self.perception_durations = dict(perception)
        return self


def fit_min_effort(waypoints: np.ndarray, durations: Sequence[float],
                   start: BoundaryCondition, end: BoundaryCondition, s: int = 3,
                   perception_durations: Optional[Dict[int, float]] = None) -> PiecewiseTrajectory:
    """
    最小制御努力スプラインの係数写像 C = C(Q_m, T, q_0, q_f)

    Args:
        waypoints: (M−1)×dim の中間点
        durations: M個の区間時間 (正)
        start, end: 端点条件
        s: 次数パラメータ (次数 2s−1)

    Returns:
        PiecewiseTrajectory

    Raises:
        ParameterError: 非正の区間時間または次元不整合
    """
    T = np.asarray(durations, dtype=float).reshape(-1)
    if len(T) == 0 or np.any(T <= 0.0) or not np.all(np.isfinite(T)):
        raise ParameterError("Segment durations must be positive", str(T))
    dim = len(start.position)
    M = len(T)
    Q = np.asarray(waypoints, dtype=float).reshape(-1, dim) if M > 1 else np.zeros((0, dim))
    if Q.shape[0] != M - 1 or len(end.position) != dim:
        raise ParameterError("Waypoint/boundary dimensions do not match",
                             f"waypoints={Q.shape}, M={M}, dim={dim}")

    n = 2 * s
    system = _assemble(T, s)
    rhs = np.zeros((n * M, dim))
    for d in range(s):
        rhs[d] = start.row(d)
        rhs[s + n * (M - 1) + d] = end.row(d)
    for j in range(M - 1):
        rhs[s + n * j] = Q[j]
    coeffs = system.solve(rhs).reshape(M, n, dim)
    return PiecewiseTrajectory(coeffs, T.copy(), s, Q.copy(), start, end,
                               dict(perception_durations or {}), system)


def gradient_propagate(traj: PiecewiseTrajectory, grad_coeffs: np.ndarray,
                       grad_durations: Optional[np.ndarray] = None
                       ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    係数勾配を決定変数 (Q_m, T, q_f) へ随伴法で伝播

    Args:
        traj: fit_min_effort の結果
        grad_coeffs: dL/dC (M, 2s, dim)
        grad_durations: 時間への直接勾配 dL/dT (M,)

    Returns:
        (dL/dQ_m (M−1)×dim, dL/dT M, dL/dq_f dim)
    """
    s = traj.s
    n = 2 * s
    M = traj.segment_count
    dim = traj.dim
    system = traj._system if traj._system is not None else _assemble(traj.durations, s)
    G = np.asarray(grad_coeffs, dtype=float).reshape(n * M, dim)
    grad_T = np.zeros(M) if grad_durations is None else np.array(grad_durations, dtype=float)
    if not np.any(G):
        return np.zeros((M - 1, dim)), grad_T, np.zeros(dim)

    adj = system.solve(G, transpose=True)
    grad_Q = np.array([adj[s + n * j] for j in range(M - 1)]).reshape(M - 1, dim)
    grad_qf = adj[s + n * (M - 1)].copy()

    # d(M c)/dT_j は区間 j 終端の行で q_j^(d+1)(T_j)
    for j in range(M - 1):
        row = s + n * j
        T_j = traj.durations[j]
        grad_T[j] -= adj[row] @ traj.eval_segment(j, T_j, 1)
        for d in range(n - 1):
            grad_T[j] -= adj[row + 1 + d] @ traj.eval_segment(j, T_j, d + 1)
    row = s + n * (M - 1)
    for d in range(s):
        grad_T[M - 1] -= adj[row + d] @ traj.eval_segment(M - 1, traj.durations[-1], d + 1)
    return grad_Q, grad_T, grad_qf


def effort_and_grad(traj: PiecewiseTrajectory) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    制御努力 Σ∫‖q^(s)‖² の閉形式と係数・時間に関する勾配

    Returns:
        (コスト, dJ/dC, dJ/dT)
    """
    s = traj.s
    n = 2 * s
    factors = np.array([factorial(k) / factorial(k - s) if k >= s else 0.0 for k in range(n)])
    cost = 0.0
    grad_C = np.zeros_like(traj.coeffs)
    grad_T = np.zeros(traj.segment_count)
    for i, T in enumerate(traj.durations):
        H = np.zeros((n, n))
        for k in range(s, n):
            for l in range(s, n):
                p = k + l - 2 * s + 1
                H[k, l] = factors[k] * factors[l] * T ** p / p
        C = traj.coeffs[i]
        cost += float(np.sum(C * (H @ C)))
        grad_C[i] = 2.0 * H @ C
        top = traj.eval_segment(i, T, s)
        grad_T[i] = float(top @ top)
    return cost, grad_C, grad_T
