"""
Desk Mobile Manipulation Toolkit - Augmented Lagrangian Solver
PHR拡張ラグランジュ法 (内部はL-BFGS-B)
"""

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from ..core.settings import AlmSettings
from ..exceptions import OptimizationError

logger = logging.getLogger(__name__)

Bounds = List[Tuple[Optional[float], Optional[float]]]


@dataclass
class AlmEvaluation:
    """
    1点での目的関数と制約値

    eq は 0 で、ineq は ≤ 0 で満たされる。weights は各サンプルの積分重み。
    """

    cost: float
    cost_gradient: np.ndarray
    eq: np.ndarray
    ineq: np.ndarray
    eq_weights: np.ndarray
    ineq_weights: np.ndarray

    def max_violation(self) -> float:
        worst = float(np.max(np.abs(self.eq))) if len(self.eq) else 0.0
        if len(self.ineq):
            worst = max(worst, float(np.max(self.ineq)))
        return max(worst, 0.0)


class AlmObjective(Protocol):
    """ALMが扱う制約付き問題"""

    x0: np.ndarray

    @property
    def bounds(self) -> Optional[Bounds]:
        ...

    def evaluate(self, x: np.ndarray) -> AlmEvaluation:
        ...

    def constraint_vjp(self, x: np.ndarray, eq_coef: np.ndarray, ineq_coef: np.ndarray) -> np.ndarray:
        ...


@dataclass
class AlmState:
    """乗数とペナルティ重み (μ ≥ 0, ρ > 0)"""

    lam: np.ndarray
    mu: np.ndarray
    rho: float

    def __post_init__(self):
        if not self.rho > 0.0:
            raise OptimizationError("Penalty weight must be positive", str(self.rho))

    def update(self, evaluation: AlmEvaluation):
        self.lam = self.lam + self.rho * evaluation.eq
        self.mu = np.maximum(0.0, self.mu + self.rho * evaluation.ineq)


@dataclass
class AlmResult:
    """ALMの結果"""

    x: np.ndarray
    converged: bool
    feasible: bool
    max_violation: float
    cost: float
    outer_iterations: int
    inner_iterations: int
    grad_norm: float
    state: AlmState
    timed_out: bool = False
    history: List[Tuple[float, float, float]] = field(default_factory=list)


def phr_penalty(evaluation: AlmEvaluation, state: AlmState) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    PHR項 Σ w [λh + ρh²/2] + Σ w ρ/2 ([μ/ρ + g]₊² − (μ/ρ)²)

    Returns:
        (ペナルティ値, 等式の係数 dP/dh, 不等式の係数 dP/dg)
    """
    rho = state.rho
    h = evaluation.eq
    value = float(np.sum(evaluation.eq_weights * (state.lam * h + 0.5 * rho * h * h)))
    eq_coef = evaluation.eq_weights * (state.lam + rho * h)
    shifted = np.maximum(0.0, state.mu / rho + evaluation.ineq)
    value += float(np.sum(evaluation.ineq_weights * 0.5 * rho * (shifted ** 2 - (state.mu / rho) ** 2)))
    ineq_coef = evaluation.ineq_weights * rho * shifted
    return value, eq_coef, ineq_coef


def _projected_grad_norm(x: np.ndarray, grad: np.ndarray, bounds: Optional[Bounds]) -> float:
    if bounds is None:
        return float(np.max(np.abs(grad))) if len(grad) else 0.0
    g = grad.copy()
    for k, (lo, hi) in enumerate(bounds):
        if lo is not None and x[k] <= lo + 1e-12 and g[k] > 0.0:
            g[k] = 0.0
        if hi is not None and x[k] >= hi - 1e-12 and g[k] < 0.0:
            g[k] = 0.0
    return float(np.max(np.abs(g))) if len(g) else 0.0


def solve_alm(objective: AlmObjective, settings: Optional[AlmSettings] = None,
              deadline: Optional[float] = None, x0: Optional[np.ndarray] = None) -> AlmResult:
    """
    PHR-ALMの外側ループ

    違反の減少が不十分なら ρ ← min(ργ, ρ_max)。最大違反 ≤ ε_cons かつ内側の
    一次最適性 ≤ ε_grad で終了。反復上限では最良点 (違反最小) を返す。

    Args:
        objective: 制約付き問題
        settings: ALM設定
        deadline: time.perf_counter() 基準の打ち切り時刻
        x0: 初期点 (None なら objective.x0)

    Returns:
        AlmResult
    """
    settings = settings or AlmSettings()
    x = np.array(objective.x0 if x0 is None else x0, dtype=float)
    bounds = objective.bounds
    if bounds is not None:
        lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds])
        hi = np.array([np.inf if b[1] is None else b[1] for b in bounds])
        x = np.clip(x, lo, hi)

    evaluation = objective.evaluate(x)
    state = AlmState(np.zeros(len(evaluation.eq)), np.zeros(len(evaluation.ineq)), settings.rho_init)
    previous = evaluation.max_violation()
    best = (previous, evaluation.cost, x.copy())
    inner_total = 0
    grad_norm = np.inf
    history: List[Tuple[float, float, float]] = []
    timed_out = False
    outer = 0

    for outer in range(1, settings.max_outer + 1):
        # 積分重みは外側反復の間固定
        weights = (evaluation.eq_weights.copy(), evaluation.ineq_weights.copy())

        def lagrangian(xk: np.ndarray) -> Tuple[float, np.ndarray]:
            ev = objective.evaluate(xk)
            if len(ev.eq) != len(state.lam) or len(ev.ineq) != len(state.mu):
                raise OptimizationError("Constraint sample count changed during solve")
            ev.eq_weights, ev.ineq_weights = weights
            penalty, eq_coef, ineq_coef = phr_penalty(ev, state)
            grad = ev.cost_gradient + objective.constraint_vjp(xk, eq_coef, ineq_coef)
            return ev.cost + penalty, grad

        result = minimize(lagrangian, x, jac=True, method="L-BFGS-B", bounds=bounds,
                          options={"maxiter": settings.max_inner, "maxcor": settings.lbfgs_memory,
                                   "gtol": settings.eps_grad})
        x = np.asarray(result.x, dtype=float)
        inner_total += int(result.nit)
        grad_norm = _projected_grad_norm(x, np.asarray(result.jac, dtype=float), bounds)

        evaluation = objective.evaluate(x)
        violation = evaluation.max_violation()
        history.append((violation, evaluation.cost, state.rho))
        logger.debug(f"ALM outer {outer}: violation={violation:.3e}, cost={evaluation.cost:.4f}, "
                     f"rho={state.rho:.1e}, inner={result.nit}")
        if violation < best[0] or (violation <= settings.eps_cons and evaluation.cost < best[1]):
            best = (violation, evaluation.cost, x.copy())

        if violation <= settings.eps_cons and (grad_norm <= settings.eps_grad or result.success):
            return AlmResult(x, True, True, violation, evaluation.cost, outer, inner_total, grad_norm,
                             state, False, history)

        state.update(evaluation)
        if violation > settings.violation_decrease * previous:
            state.rho = min(state.rho * settings.gamma, settings.rho_max)
        previous = violation

        if deadline is not None and time.perf_counter() > deadline:
            timed_out = True
            break

    violation, cost, x_best = best
    logger.warning(f"ALM stopped without convergence: violation={violation:.3e} after {outer} outer iterations")
    return AlmResult(x_best, False, violation <= settings.eps_cons, violation, cost, outer, inner_total,
                     grad_norm, state, timed_out, history)


class ScalarBoundProblem:
    """
    1次元の検証用問題: min (x − target)² s.t. x ≥ lower

    ALM本体の動作確認とCLIの check で使う。
    """

    def __init__(self, lower: float = 1.0, target: float = 0.0, start: float = 3.0):
        self.lower = lower
        self.target = target
        self.x0 = np.array([start])

    @property
    def bounds(self) -> Optional[Bounds]:
        return None

    def evaluate(self, x: np.ndarray) -> AlmEvaluation:
        d = float(x[0]) - self.target
        return AlmEvaluation(d * d, np.array([2.0 * d]), np.zeros(0), np.array([self.lower - float(x[0])]),
                             np.zeros(0), np.ones(1))

    def constraint_vjp(self, x: np.ndarray, eq_coef: np.ndarray, ineq_coef: np.ndarray) -> np.ndarray:
        return np.array([-float(ineq_coef[0])])
