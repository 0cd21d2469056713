"""
Desk Mobile Manipulation Toolkit - Constraint Kinds
最適化の制約種別 (値と局所勾配)
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import SingularityError
from ..geometry.se3 import f_d_rot_grad
from ..geometry.smooth import f_d_ray_grad, r_elastic_grad
from ..robot.kinematics import point_velocity_derivatives
from ..robot.wheels import base_rates
from ..world.obstacles import predict_obstacle
from .sites import KinematicSnapshot, LocalGradient, SampleSite

logger = logging.getLogger(__name__)

Payload = Any
Value = Tuple[float, Payload]


@dataclass(frozen=True)
class TimeSet:
    """
    制約の評価時刻集合

    mode:
        "segments": 区間 first..last の各区間で、比率区間 interval 内の count 点
        "knot": 区間境界 t̄_knot
        "task": t̄_knot + τ (τ ∈ taus)
        "perception": t̄_knot − T_p(1 − u) (u は interval 内の count 点)
        "none": 時刻に依存しない (区間時間・知覚時間のみ)

    count = 0 は評価時のサンプル密度を使う。weighted なら各点の重みは区間長 / 点数。
    """

    mode: str
    first: int = 0
    last: int = -1
    knot: int = 0
    taus: Tuple[float, ...] = ()
    perception: int = -1
    interval: Tuple[float, float] = (0.0, 1.0)
    count: int = 0
    weighted: bool = True

    def fractions(self, density: int) -> List[float]:
        """比率区間の中点サンプル"""
        lo, hi = self.interval
        if hi <= lo:
            return [lo]
        n = self.count or density
        return [lo + (hi - lo) * (k + 0.5) / n for k in range(n)]

    def knots(self) -> List[int]:
        if self.mode == "segments":
            return [self.first, self.last + 1]
        if self.mode in ("knot", "task", "perception"):
            return [self.knot]
        return []


@dataclass
class ConstraintTerm:
    """登録された制約 (種別・時刻集合・パラメータ)"""

    kind: str
    time_set: TimeSet
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def equality(self) -> bool:
        return KINDS[self.kind].equality


@dataclass
class ConstraintSample:
    """
    制約サンプル

    等式は value = 0、不等式は value ≤ 0 で満たされる。
    gradient は決定変数ベクトルに関する勾配 (要求時のみ計算)。
    """

    kind: str
    value: float
    equality: bool
    time: float
    weight: float
    term: int
    site: Optional[SampleSite]
    payload: Payload = None
    gradient: Optional[np.ndarray] = None

    @property
    def violation(self) -> float:
        return abs(self.value) if self.equality else max(self.value, 0.0)


class ConstraintKind:
    """制約種別の基底"""

    name = ""
    equality = False
    needs_site = True

    def values(self, ctx, snap: Optional[KinematicSnapshot], term: ConstraintTerm) -> List[Value]:
        raise NotImplementedError

    def gradient(self, ctx, snap: Optional[KinematicSnapshot], term: ConstraintTerm,
                 payload: Payload) -> LocalGradient:
        raise NotImplementedError


def _zeros(ctx) -> LocalGradient:
    return LocalGradient.zeros(ctx.dim)


def _ee_link(ctx) -> int:
    return ctx.desc.joint_count


# ---- タスク ----

class TaskPositionKind(ConstraintKind):
    """手先位置 = タスク目標 (成分ごとの等式)"""

    name = "task_position"
    equality = True

    def values(self, ctx, snap, term):
        target = term.params["targets"][snap.site.tag].translation
        error = snap.frame("ee")[:3, 3] - target
        return [(float(error[c]), c) for c in range(3)]

    def gradient(self, ctx, snap, term, payload):
        grad_p = np.zeros(3)
        grad_p[payload] = 1.0
        return snap.pull_point(grad_p, _ee_link(ctx), snap.frame("ee")[:3, 3])


class TaskOrientationKind(ConstraintKind):
    """f_d_rot(R_ee, R_target) − d_o ≤ 0"""

    name = "task_orientation"

    def values(self, ctx, snap, term):
        target = term.params["targets"][snap.site.tag].rotation_matrix
        angle, _ = f_d_rot_grad(snap.frame("ee")[:3, :3], target)
        return [(angle - ctx.settings.d_o, None)]

    def gradient(self, ctx, snap, term, payload):
        target = term.params["targets"][snap.site.tag].rotation_matrix
        _, grad = f_d_rot_grad(snap.frame("ee")[:3, :3], target)
        return snap.pull_rotation(grad, _ee_link(ctx))


class TaskDurationKind(ConstraintKind):
    """Σ_{j=κs}^{κe−1} T_j − T_T,i = 0"""

    name = "task_duration"
    equality = True
    needs_site = False

    def values(self, ctx, snap, term):
        lo, hi = term.params["segments"]
        return [(float(np.sum(ctx.durations[lo:hi])) - term.params["duration"], None)]

    def gradient(self, ctx, snap, term, payload):
        lo, hi = term.params["segments"]
        out = _zeros(ctx)
        out.T = np.zeros(len(ctx.durations))
        out.T[lo:hi] = 1.0
        return out


class InstantVelocityKind(ConstraintKind):
    """瞬時タスクの手先並進・角速度 (二乗) の上限"""

    name = "instant_task_velocity"

    def _rates(self, snap):
        q = snap.q
        try:
            rates = base_rates(q[1, :2], q[2, :2], q[3, :2])
            omega, d_omega = rates.omega, rates.d_omega
        except SingularityError:
            omega, d_omega = 0.0, np.zeros((3, 2))
        g_dot = np.concatenate([q[1, :2], [omega], q[1, 2:]])
        return g_dot, d_omega

    def _velocities(self, ctx, snap):
        g_dot, d_omega = self._rates(snap)
        p_ee = snap.frame("ee")[:3, 3]
        v, w, dv, dw, Jv, Jw = point_velocity_derivatives(snap.chain, _ee_link(ctx), p_ee, g_dot)
        return v, w, dv, dw, Jv, Jw, d_omega

    def values(self, ctx, snap, term):
        v, w = self._velocities(ctx, snap)[:2]
        return [(float(v @ v) - ctx.settings.d_ee_v ** 2, "linear"),
                (float(w @ w) - ctx.settings.d_ee_w ** 2, "angular")]

    def gradient(self, ctx, snap, term, payload):
        v, w, dv, dw, Jv, Jw, d_omega = self._velocities(ctx, snap)
        if payload == "linear":
            vec, d_pos, J = v, dv, Jv
        else:
            vec, d_pos, J = w, dw, Jw
        cols = [0, 1] + list(range(3, 3 + ctx.desc.joint_count))
        out = _zeros(ctx)
        a = 2.0 * vec
        # 姿勢経由 (g = x, y, ψ, q_m)
        out.derivs[0] += a @ d_pos[:, cols]
        out.derivs[1, :2] += (a @ d_pos[:, 2]) * snap.dpsi
        # 速度経由 (ġ = ẋ, ẏ, ω_b, q̇_m)
        out.derivs[1] += a @ J[:, cols]
        out.derivs[1, :2] += (a @ J[:, 2]) * d_omega[0]
        out.derivs[2, :2] += (a @ J[:, 2]) * d_omega[1]
        return out


# ---- 動的実行可能性 ----

class WheelKind(ConstraintKind):
    """左右車輪の角速度または角加速度の二乗上限"""

    def __init__(self, name: str, acceleration: bool):
        self.name = name
        self.acceleration = acceleration

    def _wheel(self, ctx, snap):
        q = snap.q
        base = ctx.desc.base
        try:
            rates = base_rates(q[1, :2], q[2, :2], q[3, :2])
        except SingularityError:
            return None
        if self.acceleration:
            lin, ang, d_lin, d_ang = rates.accel, rates.alpha, rates.d_accel, rates.d_alpha
        else:
            lin, ang, d_lin, d_ang = rates.speed, rates.omega, rates.d_speed, rates.d_omega
        k = 1.0 / (2.0 * base.wheel_radius)
        wheels = [(k * (2.0 * lin - base.wheel_separation * ang), k * (2.0 * d_lin - base.wheel_separation * d_ang)),
                  (k * (2.0 * lin + base.wheel_separation * ang), k * (2.0 * d_lin + base.wheel_separation * d_ang))]
        return wheels

    def _limit(self, ctx) -> float:
        base = ctx.desc.base
        return base.wheel_alpha_max if self.acceleration else base.wheel_omega_max

    def values(self, ctx, snap, term):
        limit = self._limit(ctx) ** 2
        wheels = self._wheel(ctx, snap)
        if wheels is None:
            return [(-limit, 0), (-limit, 1)]
        return [(wheels[i][0] ** 2 - limit, i) for i in range(2)]

    def gradient(self, ctx, snap, term, payload):
        out = _zeros(ctx)
        wheels = self._wheel(ctx, snap)
        if wheels is None:
            return out
        value, d_value = wheels[payload]
        out.derivs[1:4, :2] += 2.0 * value * d_value
        return out


class MinBaseVelocityKind(ConstraintKind):
    """v_min² − q̇_bᵀq̇_b ≤ 0"""

    name = "min_base_velocity"

    def values(self, ctx, snap, term):
        return [(ctx.desc.base.v_min ** 2 - snap.speed_sq, None)]

    def gradient(self, ctx, snap, term, payload):
        out = _zeros(ctx)
        out.derivs[1, :2] = -2.0 * snap.q[1, :2]
        return out


class JointKind(ConstraintKind):
    """関節の位置・速度・加速度制約"""

    def __init__(self, name: str, order: int):
        self.name = name
        self.order = order

    def values(self, ctx, snap, term):
        desc = ctx.desc
        q = snap.q[self.order, 2:]
        if self.order == 0:
            out = [(float(q[l] - desc.q_max[l]), (l, 1)) for l in range(desc.joint_count)]
            out.extend((float(desc.q_min[l] - q[l]), (l, -1)) for l in range(desc.joint_count))
            return out
        limit = desc.omega_max if self.order == 1 else desc.alpha_max
        return [(float(q[l] ** 2 - limit[l] ** 2), (l, 0)) for l in range(desc.joint_count)]

    def gradient(self, ctx, snap, term, payload):
        l, sign = payload
        out = _zeros(ctx)
        if self.order == 0:
            out.derivs[0, 2 + l] = float(sign)
        else:
            out.derivs[self.order, 2 + l] = 2.0 * snap.q[self.order, 2 + l]
        return out


# ---- 衝突 ----

class EnvCollisionKind(ConstraintKind):
    """r_l + d_s − D_ESDF(p_l,j) ≤ 0"""

    name = "env_collision"

    def values(self, ctx, snap, term):
        centers = snap.sphere_centers
        dist, _, _ = ctx.world.query_batch(centers)
        radii = ctx.desc.sphere_radii
        return [(float(radii[i] + ctx.settings.d_s - dist[i]), i) for i in range(len(radii))]

    def gradient(self, ctx, snap, term, payload):
        center = snap.sphere_centers[payload]
        _, grad, _ = ctx.world.query(center)
        return snap.pull_point(-np.asarray(grad), int(ctx.desc.sphere_links[payload]), center)


class DynCollisionKind(ConstraintKind):
    """r_l + r_dy + d_s − ‖[p_l,j]_xy − p_dy(t)‖ ≤ 0"""

    name = "dyn_collision"

    def _offset(self, ctx, snap, obstacle_index: int, sphere: int):
        obstacle = ctx.obstacles[obstacle_index]
        p_dy = predict_obstacle(obstacle, ctx.time_origin + snap.site.time)
        delta = snap.sphere_centers[sphere][:2] - p_dy
        return obstacle, delta, float(np.linalg.norm(delta))

    def values(self, ctx, snap, term):
        out = []
        radii = ctx.desc.sphere_radii
        for o, obstacle in enumerate(ctx.obstacles):
            for i in range(len(radii)):
                _, _, dist = self._offset(ctx, snap, o, i)
                out.append((float(radii[i] + obstacle.radius + ctx.settings.d_s - dist), (o, i)))
        return out

    def gradient(self, ctx, snap, term, payload):
        o, i = payload
        obstacle, delta, dist = self._offset(ctx, snap, o, i)
        if dist <= 1e-12:
            return _zeros(ctx)
        u = delta / dist
        out = snap.pull_point(-np.array([u[0], u[1], 0.0]), int(ctx.desc.sphere_links[i]), snap.sphere_centers[i])
        if ctx.time_origin + snap.site.time > 0.0:
            out.time += float(u @ obstacle.velocity)
        return out


class SelfCollisionKind(ConstraintKind):
    """r + r' + d_self − ‖c_a − c_b‖ ≤ 0"""

    name = "self_collision"

    def values(self, ctx, snap, term):
        centers = snap.sphere_centers
        radii = ctx.desc.sphere_radii
        out = []
        for index, (a, b) in enumerate(ctx.desc.self_collision_pairs):
            dist = float(np.linalg.norm(centers[a] - centers[b]))
            out.append((float(radii[a] + radii[b] + ctx.settings.d_self - dist), index))
        return out

    def gradient(self, ctx, snap, term, payload):
        a, b = ctx.desc.self_collision_pairs[payload]
        centers = snap.sphere_centers
        delta = centers[a] - centers[b]
        dist = float(np.linalg.norm(delta))
        out = _zeros(ctx)
        if dist <= 1e-12:
            return out
        u = delta / dist
        links = ctx.desc.sphere_links
        snap.pull_point(-u, int(links[a]), centers[a], out)
        snap.pull_point(u, int(links[b]), centers[b], out)
        return out


# ---- 知覚 ----

class TapWindowKind(ConstraintKind):
    """T_p,i − Σ_{j=κ_{i−1,e}}^{κ_{i,s}−1} T_j ≤ 0 (下限はボックス制約)"""

    name = "tap_window"
    needs_site = False

    def values(self, ctx, snap, term):
        lo, hi = term.params["segments"]
        p = term.params["perception"]
        return [(float(ctx.perception[p] - np.sum(ctx.durations[lo:hi])), None)]

    def gradient(self, ctx, snap, term, payload):
        lo, hi = term.params["segments"]
        out = _zeros(ctx)
        out.T = np.zeros(len(ctx.durations))
        out.T[lo:hi] = -1.0
        out.Tp = np.zeros(len(ctx.perception))
        out.Tp[term.params["perception"]] = 1.0
        return out


class VisibilityKind(ConstraintKind):
    """視野錐・最大距離・遮蔽球による可視性制約"""

    def __init__(self, name: str, mode: str):
        self.name = name
        self.mode = mode

    def _camera(self, snap):
        T = snap.frame("camera")
        return T[:3, 3], T[:3, 2]

    def values(self, ctx, snap, term):
        p_c, z_c = self._camera(snap)
        target = term.params["target"]
        v = target - p_c
        n = float(np.linalg.norm(v))
        s = ctx.settings
        if self.mode == "fov":
            cos_view = float(z_c @ v) / n if n > 1e-12 else 1.0
            return [(float(np.cos(s.fov_half_angle)) - cos_view, None)]
        if self.mode == "range":
            return [(n * n - s.max_range ** 2, None)]
        K = s.occlusion_spheres
        points = np.array([p_c + (k / K) * v for k in range(1, K)])
        dist, _, _ = ctx.world.query_batch(points)
        return [(float((k / K) * s.target_radius - dist[k - 1]), k) for k in range(1, K)]

    def gradient(self, ctx, snap, term, payload):
        p_c, z_c = self._camera(snap)
        v = term.params["target"] - p_c
        n = float(np.linalg.norm(v))
        link = _ee_link(ctx)
        if self.mode == "fov":
            out = _zeros(ctx)
            if n <= 1e-12:
                return out
            v_hat = v / n
            snap.pull_point((z_c - (z_c @ v_hat) * v_hat) / n, link, p_c, out)
            snap.pull_rotation(-np.cross(z_c, v_hat), link, out)
            return out
        if self.mode == "range":
            return snap.pull_point(-2.0 * v, link, p_c)
        K = ctx.settings.occlusion_spheres
        ratio = payload / K
        _, grad, _ = ctx.world.query(p_c + ratio * v)
        return snap.pull_point(-(1.0 - ratio) * np.asarray(grad), link, p_c)


# ---- 補償・安全な相互作用 ----

class CmzKind(ConstraintKind):
    """‖Q⁻¹Rᵀ(p_mb − o)‖² − 1 ≤ 0"""

    name = "cmz"

    def _scaled(self, term, p_mb):
        ellipse = term.params["ellipse"]
        A = np.diag(1.0 / np.asarray(ellipse.semi_axes)) @ ellipse.rotation.T
        return A, A @ (p_mb[:2] - ellipse.center)

    def values(self, ctx, snap, term):
        _, u = self._scaled(term, snap.frame("arm_base")[:3, 3])
        return [(float(u @ u) - 1.0, None)]

    def gradient(self, ctx, snap, term, payload):
        p_mb = snap.frame("arm_base")[:3, 3]
        A, u = self._scaled(term, p_mb)
        grad = np.zeros(3)
        grad[:2] = 2.0 * A.T @ u
        return snap.pull_point(grad, 0, p_mb)


class EsiKind(ConstraintKind):
    """
    安全な相互作用区間の接近・退避制約

    mode "band": 半直線距離と姿勢の帯、mode "anchor": 窓端点のオフセット位置
    """

    def __init__(self, name: str):
        self.name = name

    def values(self, ctx, snap, term):
        pose = term.params["pose"]
        T = snap.frame("ee")
        s = ctx.settings
        if term.params["mode"] == "anchor":
            anchor = pose.translation - s.d_m * pose.z_axis
            e = T[:3, 3] - anchor
            return [(float(e @ e) - s.d_pos ** 2, "anchor")]
        ray, _ = f_d_ray_grad(T[:3, 3], pose.translation, -pose.z_axis, ctx.ray_smooth)
        angle, _ = f_d_rot_grad(T[:3, :3], pose.rotation_matrix)
        return [(ray - s.d_pos, "ray"), (angle - s.d_o, "orientation")]

    def gradient(self, ctx, snap, term, payload):
        pose = term.params["pose"]
        T = snap.frame("ee")
        link = _ee_link(ctx)
        if payload == "anchor":
            anchor = pose.translation - ctx.settings.d_m * pose.z_axis
            return snap.pull_point(2.0 * (T[:3, 3] - anchor), link, T[:3, 3])
        if payload == "ray":
            _, grad = f_d_ray_grad(T[:3, 3], pose.translation, -pose.z_axis, ctx.ray_smooth)
            return snap.pull_point(grad, link, T[:3, 3])
        _, grad = f_d_rot_grad(T[:3, :3], pose.rotation_matrix)
        return snap.pull_rotation(grad, link)


class EcsKind(ConstraintKind):
    """
    把持物体球の弾性クリアランス

    r_elastic(p_t, p_o,m, r) + d_s − D(p_o,m) − d_ela ≤ 0
    """

    name = "ecs_object_safety"

    def _sphere(self, snap, term, m: int) -> np.ndarray:
        local, _ = term.params["spheres"][m]
        return (snap.frame("ee") @ term.params["grasp_inverse"] @ np.append(local, 1.0))[:3]

    def values(self, ctx, snap, term):
        out = []
        for m, (_, radius) in enumerate(term.params["spheres"]):
            p = self._sphere(snap, term, m)
            dist = ctx.world.value(p)
            for k, (p_t, d_t) in enumerate(term.params["targets"][m]):
                r = r_elastic_grad(p_t, p, radius, d_t, ctx.settings.d_s, ctx.smooth)[0]
                out.append((float(r + ctx.settings.d_s - dist - ctx.settings.d_ela), (m, k)))
        return out

    def gradient(self, ctx, snap, term, payload):
        m, k = payload
        radius = term.params["spheres"][m][1]
        p_t, d_t = term.params["targets"][m][k]
        p = self._sphere(snap, term, m)
        _, grad_r = r_elastic_grad(p_t, p, radius, d_t, ctx.settings.d_s, ctx.smooth)
        _, grad_d, _ = ctx.world.query(p)
        return snap.pull_point(grad_r - np.asarray(grad_d), _ee_link(ctx), p)


KINDS: Dict[str, ConstraintKind] = {kind.name: kind for kind in [
    TaskPositionKind(),
    TaskOrientationKind(),
    TaskDurationKind(),
    InstantVelocityKind(),
    WheelKind("wheel_velocity", acceleration=False),
    WheelKind("wheel_acceleration", acceleration=True),
    MinBaseVelocityKind(),
    JointKind("joint_position", 0),
    JointKind("joint_velocity", 1),
    JointKind("joint_acceleration", 2),
    EnvCollisionKind(),
    DynCollisionKind(),
    SelfCollisionKind(),
    TapWindowKind(),
    VisibilityKind("visibility_fov", "fov"),
    VisibilityKind("visibility_range", "range"),
    VisibilityKind("visibility_occlusion", "occlusion"),
    CmzKind(),
    EsiKind("esi_pre"),
    EsiKind("esi_post"),
    EcsKind(),
]}


def kind_names() -> Sequence[str]:
    return list(KINDS)
