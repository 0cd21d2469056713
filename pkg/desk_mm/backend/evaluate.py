"""
Desk Mobile Manipulation Toolkit - Problem Evaluation
目的関数・制約サンプルの評価と決定変数への勾配伝播
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..trajectory.minco import PiecewiseTrajectory, basis, effort_and_grad, gradient_propagate
from .constraints import KINDS, ConstraintSample, ConstraintTerm
from .problem import OptimizationProblem
from .sites import KinematicSnapshot, LocalGradient, SampleSite, segment_site, timed_site

logger = logging.getLogger(__name__)


@dataclass
class EvalContext:
    """1回の評価で共有する状態"""

    problem: OptimizationProblem
    traj: PiecewiseTrajectory
    perception: np.ndarray
    dT_dxi: np.ndarray
    density: int
    snapshots: Dict[Tuple, KinematicSnapshot] = field(default_factory=dict)
    site_snapshots: Dict[int, KinematicSnapshot] = field(default_factory=dict)

    @property
    def desc(self):
        return self.problem.desc

    @property
    def settings(self):
        return self.problem.settings

    @property
    def world(self):
        return self.problem.world

    @property
    def obstacles(self):
        return self.problem.obstacles

    @property
    def time_origin(self) -> float:
        return self.problem.time_origin

    @property
    def smooth(self):
        return self.problem.smooth

    @property
    def ray_smooth(self):
        return self.problem.ray_smooth

    @property
    def dim(self) -> int:
        return self.problem.layout.dim

    @property
    def durations(self) -> np.ndarray:
        return self.traj.durations

    def snapshot(self, key: Tuple, site: SampleSite) -> KinematicSnapshot:
        snap = self.snapshots.get(key)
        if snap is None:
            snap = KinematicSnapshot(self.desc, self.traj, site)
            self.snapshots[key] = snap
        return snap


@dataclass
class Evaluation:
    """evaluate の結果"""

    cost: float
    gradient: np.ndarray
    samples: List[ConstraintSample]
    trajectory: PiecewiseTrajectory
    context: EvalContext

    def max_violation(self) -> float:
        return max((s.violation for s in self.samples), default=0.0)

    def violations_by_kind(self) -> Dict[str, float]:
        out: Dict[str, float] = {}
        for s in self.samples:
            out[s.kind] = max(out.get(s.kind, 0.0), s.violation)
        return out


def _sites(ctx: EvalContext, term: ConstraintTerm) -> List[Tuple[Tuple, SampleSite]]:
    ts = term.time_set
    traj = ctx.traj
    P = len(ctx.perception)
    M = traj.segment_count
    out: List[Tuple[Tuple, SampleSite]] = []
    if ts.mode == "segments":
        fractions = ts.fractions(ctx.density)
        for j in range(ts.first, ts.last + 1):
            span = float(traj.durations[j]) * (ts.interval[1] - ts.interval[0])
            weight = span / len(fractions) if ts.weighted else 1.0
            for f in fractions:
                out.append((("seg", j, round(f, 12)), segment_site(traj, j, f, P, weight)))
    elif ts.mode == "knot":
        site = segment_site(traj, min(ts.knot, M - 1), 1.0 if ts.knot >= M else 0.0, P)
        out.append((("seg", site.segment, 1.0 if ts.knot >= M else 0.0), site))
    elif ts.mode == "task":
        dt = np.zeros(M)
        dt[:ts.knot] = 1.0
        t0 = float(traj.times[ts.knot])
        for index, tau in enumerate(ts.taus):
            site = timed_site(traj, t0 + tau, dt, np.zeros(P), tag=index)
            out.append((("time", site.time), site))
    elif ts.mode == "perception":
        dt = np.zeros(M)
        dt[:ts.knot] = 1.0
        t0 = float(traj.times[ts.knot])
        Tp = float(ctx.perception[ts.perception])
        us = ts.fractions(ctx.density)
        for index, u in enumerate(us):
            dtp = np.zeros(P)
            dtp[ts.perception] = -(1.0 - u)
            site = timed_site(traj, t0 - Tp * (1.0 - u), dt, dtp, weight=Tp / len(us), tag=index)
            out.append((("time", site.time), site))
    return out


def _scaled_density(problem: OptimizationProblem, samples_per_segment: int, term: ConstraintTerm) -> int:
    if term.time_set.mode == "perception":
        ratio = samples_per_segment / problem.settings.samples_per_segment
        return max(2, int(round(problem.settings.visibility_samples * ratio)))
    return samples_per_segment


def evaluate(problem: OptimizationProblem, z: np.ndarray, samples_per_segment: Optional[int] = None,
             with_gradients: bool = False) -> Evaluation:
    """
    目的関数と全制約サンプルの評価

    Args:
        problem: 最適化問題
        z: 決定変数
        samples_per_segment: 区間あたりのサンプル数 n_s (None なら設定値)
        with_gradients: 各サンプルに決定変数勾配を付ける (検証用)

    Returns:
        Evaluation (cost, gradient は目的関数のみ)
    """
    n_s = samples_per_segment or problem.settings.samples_per_segment
    traj, Tp, dT_dxi = problem.decode(z)
    ctx = EvalContext(problem, traj, Tp, dT_dxi, n_s)

    effort, dC, dT = effort_and_grad(traj)
    cost = effort + problem.weight_time * traj.total_duration - problem.weight_perception * float(np.sum(Tp))
    dT = dT + problem.weight_time
    dTp = np.full(len(Tp), -problem.weight_perception)
    gradient = _to_decision(problem, traj, dC, dT, dT_dxi, dTp)

    samples: List[ConstraintSample] = []
    for index, term in enumerate(problem.terms):
        kind = KINDS[term.kind]
        if not kind.needs_site:
            for value, payload in kind.values(ctx, None, term):
                samples.append(ConstraintSample(term.kind, value, kind.equality, 0.0, 1.0, index, None, payload))
            continue
        ctx.density = _scaled_density(problem, n_s, term)
        for key, site in _sites(ctx, term):
            snap = ctx.snapshot(key, site)
            snap.site = site
            ctx.site_snapshots[id(site)] = snap
            for value, payload in kind.values(ctx, snap, term):
                samples.append(ConstraintSample(term.kind, value, kind.equality, site.time, site.weight,
                                                index, site, payload))
    ctx.density = n_s

    if with_gradients:
        for sample in samples:
            sample.gradient = constraint_vjp(problem, ctx, [sample], [1.0])
    return Evaluation(float(cost), gradient, samples, traj, ctx)


def _to_decision(problem: OptimizationProblem, traj: PiecewiseTrajectory, dC: np.ndarray, dT: np.ndarray,
                 dT_dxi: np.ndarray, dTp: np.ndarray) -> np.ndarray:
    layout = problem.layout
    dQ, dT_total, dqf = gradient_propagate(traj, dC, dT)
    out = np.zeros(layout.size)
    out[layout.waypoints] = dQ.reshape(-1)
    out[layout.free_durations] = dT_total * dT_dxi
    out[layout.final] = dqf
    out[layout.perception_durations] = dTp
    return out


def _local_gradient(ctx: EvalContext, sample: ConstraintSample) -> LocalGradient:
    term = ctx.problem.terms[sample.term]
    kind = KINDS[term.kind]
    if sample.site is None:
        return kind.gradient(ctx, None, term, sample.payload)
    snap = ctx.site_snapshots.get(id(sample.site))
    if snap is None:
        snap = KinematicSnapshot(ctx.desc, ctx.traj, sample.site)
    snap.site = sample.site
    return kind.gradient(ctx, snap, term, sample.payload)


def constraint_vjp(problem: OptimizationProblem, ctx: EvalContext, samples: Sequence[ConstraintSample],
                   coefficients: Sequence[float]) -> np.ndarray:
    """
    Σ_k c_k ∇_z value_k

    係数 0 のサンプルは局所勾配を計算しない。
    """
    traj = ctx.traj
    n = 2 * traj.s
    M = traj.segment_count
    dC = np.zeros_like(traj.coeffs)
    dT = np.zeros(M)
    dTp = np.zeros(len(ctx.perception))
    for sample, c in zip(samples, coefficients):
        if c == 0.0:
            continue
        local = _local_gradient(ctx, sample)
        if local.T is not None:
            dT += c * local.T
        if local.Tp is not None:
            dTp += c * local.Tp
        site = sample.site
        if site is None:
            continue
        j, tau = site.segment, site.tau
        rate = 0.0
        for k in range(4):
            g = local.derivs[k]
            if not np.any(g):
                continue
            dC[j] += c * np.outer(basis(tau, k, n), g)
            rate += float(g @ traj.eval_segment(j, tau, k + 1))
        dT += c * (rate * site.dtau_dT + local.time * site.dt_dT)
        dTp += c * (rate * site.dtau_dTp + local.time * site.dt_dTp)
    return _to_decision(problem, traj, dC, dT, ctx.dT_dxi, dTp)
