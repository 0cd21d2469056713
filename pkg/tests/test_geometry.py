"""
Desk Mobile Manipulation Toolkit - Geometry Tests
平滑関数・回転距離・楕円・SE(3)補間のテスト
"""

import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from desk_mm.exceptions import DomainError, ParameterError
from desk_mm.geometry.ellipse import Ellipse2, d_point_ellipse, d_point_ellipse_grad, fit_ellipse
from desk_mm.geometry.se3 import RigidPose, f_d_rot, f_d_rot_grad, interp_se3, rot_z
from desk_mm.geometry.smooth import (SmoothParams, alpha_poly, alpha_poly_grad, f_d_ray, f_d_ray_grad, f_log,
                                     f_log_grad, f_s, f_s_grad, r_elastic, r_elastic_grad)


class TestBlendFunction:
    """f_log のテスト"""

    def test_endpoints_and_midpoint(self):
        """端点で0/1、中点で0.5"""
        assert f_log(-1.0, -1.0, 1.0) == 0.0
        assert f_log(1.0, -1.0, 1.0) == 1.0
        assert f_log(0.0, -1.0, 1.0) == pytest.approx(0.5)
        assert f_log(-5.0, -1.0, 1.0) == 0.0
        assert f_log(5.0, -1.0, 1.0) == 1.0

    def test_monotone(self):
        """区間内で単調非減少"""
        xs = np.linspace(-1.5, 1.5, 301)
        values = [f_log(x, -1.0, 1.0) for x in xs]
        assert all(b >= a - 1e-15 for a, b in zip(values, values[1:]))

    def test_derivative_matches_finite_difference(self):
        """解析導関数と中心差分"""
        for x in np.linspace(-1.2, 1.2, 49):
            _, slope = f_log_grad(x, -1.0, 1.0)
            fd = (f_log(x + 1e-6, -1.0, 1.0) - f_log(x - 1e-6, -1.0, 1.0)) / 2e-6
            assert slope == pytest.approx(fd, abs=1e-6)

    def test_second_derivative_continuous(self):
        """区間境界と中点で2階導関数が連続"""
        eps = 1e-7
        for knot in (-1.0, 0.0, 1.0):
            left = (f_log_grad(knot - eps, -1.0, 1.0)[1] - f_log_grad(knot - 2 * eps, -1.0, 1.0)[1]) / eps
            right = (f_log_grad(knot + 2 * eps, -1.0, 1.0)[1] - f_log_grad(knot + eps, -1.0, 1.0)[1]) / eps
            assert left == pytest.approx(right, abs=1e-4)

    def test_invalid_interval(self):
        """a >= b はエラー"""
        with pytest.raises(DomainError):
            f_log(0.0, 1.0, 1.0)
        with pytest.raises(DomainError):
            f_log(0.0, 2.0, 1.0)


class TestRecoveryFunction:
    """f_s のテスト"""

    def setup_method(self):
        self.smooth = SmoothParams(0.01)

    def test_phases(self):
        """4相それぞれの値"""
        assert f_s(0.0, 0.05, self.smooth) == 0.0
        assert f_s(0.03, 0.05, self.smooth) == pytest.approx(0.025)
        assert f_s(0.07, 0.05, self.smooth) == pytest.approx(0.05)
        assert f_s(-0.2, 0.05, self.smooth) == 0.0

    def test_nonpositive_target_is_zero(self):
        """d_v <= 0 は常に0"""
        assert f_s(0.3, 0.0, self.smooth) == 0.0
        assert f_s(0.3, -0.1, self.smooth) == 0.0

    def test_mu_must_be_below_target(self):
        """μ >= d_v はエラー"""
        with pytest.raises(ParameterError):
            f_s(0.01, 0.01, self.smooth)

    def test_nonpositive_mu_rejected(self):
        """μ <= 0 の平滑化パラメータは作れない"""
        with pytest.raises(ParameterError):
            SmoothParams(0.0)

    def test_derivative_and_continuity(self):
        """導関数が中心差分と一致し、相の境界で値が連続"""
        d_v = 0.05
        for x in np.linspace(0.001, 0.07, 70):
            _, slope = f_s_grad(x, d_v, self.smooth)
            fd = (f_s(x + 1e-7, d_v, self.smooth) - f_s(x - 1e-7, d_v, self.smooth)) / 2e-7
            assert slope == pytest.approx(fd, abs=1e-5)
        for knot in (0.01, 0.05, 0.06):
            assert f_s(knot - 1e-9, d_v, self.smooth) == pytest.approx(f_s(knot + 1e-9, d_v, self.smooth), abs=1e-8)


class TestElasticRadius:
    """弾性衝突球半径のテスト"""

    def setup_method(self):
        self.smooth = SmoothParams(0.01)
        self.p_t = np.array([1.0, 0.0, 0.5])

    def test_shrunk_at_contact(self):
        """接触位置では r − f_dv"""
        # f_dv = r + d_s − esdf = 0.1 + 0.05 − 0.1 = 0.05
        assert r_elastic(self.p_t, self.p_t, 0.1, 0.1, 0.05, self.smooth) == pytest.approx(0.05)

    def test_recovered_far_away(self):
        """f_dv + μ 以上離れると r に戻る"""
        p = self.p_t + np.array([0.06, 0.0, 0.0])
        assert r_elastic(self.p_t, p, 0.1, 0.1, 0.05, self.smooth) == pytest.approx(0.1)

    def test_no_shrink_when_clear(self):
        """目標付近に余裕があれば常に r"""
        radius, grad = r_elastic_grad(self.p_t, self.p_t, 0.1, 0.5, 0.05, self.smooth)
        assert radius == 0.1
        assert np.all(grad == 0.0)

    def test_gradient(self, numeric_gradient):
        """中心位置に関する勾配"""
        p = self.p_t + np.array([0.02, 0.01, -0.005])
        _, grad = r_elastic_grad(self.p_t, p, 0.1, 0.1, 0.05, self.smooth)
        fd = numeric_gradient(lambda x: r_elastic(self.p_t, x, 0.1, 0.1, 0.05, self.smooth), p)
        np.testing.assert_allclose(grad, fd, atol=1e-6)


class TestRayDistance:
    """f_d_ray のテスト"""

    def setup_method(self):
        self.smooth = SmoothParams(0.5)
        self.origin = np.zeros(3)
        self.direction = np.array([1.0, 0.0, 0.0])

    def test_perpendicular_side(self):
        """前方では垂線距離"""
        assert f_d_ray([2.0, 1.0, 0.0], self.origin, self.direction, self.smooth) == pytest.approx(1.0)

    def test_behind_origin(self):
        """後方では原点までの距離"""
        assert f_d_ray([-2.0, 0.0, 0.0], self.origin, self.direction, self.smooth) == pytest.approx(2.0)

    def test_at_origin(self):
        """原点上は0"""
        value, grad = f_d_ray_grad(self.origin, self.origin, self.direction, self.smooth)
        assert value == 0.0
        assert np.all(grad == 0.0)

    def test_direction_must_be_unit(self):
        """非単位方向はエラー"""
        with pytest.raises(ParameterError):
            f_d_ray([1.0, 1.0, 0.0], self.origin, [2.0, 0.0, 0.0], self.smooth)

    def test_gradient(self, numeric_gradient):
        """ブレンド領域を含む乱数点での勾配"""
        rng = np.random.default_rng(3)
        direction = np.array([1.0, 2.0, 2.0]) / 3.0
        for _ in range(20):
            p = rng.uniform(-1.0, 1.0, 3)
            _, grad = f_d_ray_grad(p, self.origin, direction, self.smooth)
            fd = numeric_gradient(lambda x: f_d_ray(x, self.origin, direction, self.smooth), p)
            np.testing.assert_allclose(grad, fd, atol=1e-5)


class TestRotationDistance:
    """回転距離のテスト"""

    def test_known_angles(self):
        """既知の角度"""
        assert f_d_rot(np.eye(3), rot_z(math.pi)) == pytest.approx(math.pi)
        assert f_d_rot(np.eye(3), rot_z(math.pi / 2)) == pytest.approx(math.pi / 2)
        assert f_d_rot(np.eye(3), np.eye(3)) == pytest.approx(0.0)

    def test_gradient_world_perturbation(self):
        """ワールド系摂動に関する勾配"""
        rng = np.random.default_rng(7)
        for _ in range(10):
            R = Rotation.random(random_state=rng).as_matrix()
            target = Rotation.random(random_state=rng).as_matrix()
            _, grad = f_d_rot_grad(R, target)
            fd = np.zeros(3)
            for k in range(3):
                delta = np.zeros(3)
                delta[k] = 1e-6
                plus = f_d_rot(Rotation.from_rotvec(delta).as_matrix() @ R, target)
                minus = f_d_rot(Rotation.from_rotvec(-delta).as_matrix() @ R, target)
                fd[k] = (plus - minus) / 2e-6
            np.testing.assert_allclose(grad, fd, atol=1e-5)


class TestPolynomialStep:
    """5次スムースステップのテスト"""

    def test_values(self):
        """端点・中点の値と端点での導関数0"""
        assert alpha_poly(0.0) == 0.0
        assert alpha_poly(1.0) == 1.0
        assert alpha_poly(0.5) == pytest.approx(0.5)
        assert alpha_poly_grad(0.0)[1] == 0.0
        assert alpha_poly_grad(1.0)[1] == 0.0

    def test_clamped(self):
        """範囲外はクランプ"""
        assert alpha_poly(-0.5) == 0.0
        assert alpha_poly(1.5, debug=True) == 1.0


class TestEllipse:
    """楕円のテスト"""

    def test_distance_examples(self):
        """内部0、外部は境界までの距離"""
        circle = Ellipse2.circle([0.0, 0.0], 1.0)
        assert d_point_ellipse([0.5, 0.0], circle) == 0.0
        assert d_point_ellipse([2.0, 0.0], circle) == pytest.approx(1.0)
        ellipse = Ellipse2.from_angle([0.0, 0.0], 0.0, 2.0, 1.0)
        assert d_point_ellipse([4.0, 0.0], ellipse) == pytest.approx(2.0)

    def test_invalid_axes(self):
        """a < b はエラー"""
        with pytest.raises(ParameterError):
            Ellipse2.from_angle([0.0, 0.0], 0.0, 1.0, 2.0)

    def test_distance_gradient(self, numeric_gradient):
        """回転楕円の外部点で勾配"""
        ellipse = Ellipse2.from_angle([0.3, -0.2], 0.7, 0.5, 0.2)
        rng = np.random.default_rng(11)
        for _ in range(20):
            p = ellipse.center + rng.uniform(-2.0, 2.0, 2)
            if ellipse.contains(p):
                continue
            _, grad = d_point_ellipse_grad(p, ellipse)
            fd = numeric_gradient(lambda x: d_point_ellipse(x, ellipse), p)
            np.testing.assert_allclose(grad, fd, atol=1e-6)

    def test_fit_covers_points(self):
        """フィットした楕円が指定割合の点を含む"""
        rng = np.random.default_rng(5)
        points = rng.normal(size=(400, 2)) * np.array([0.3, 0.1])
        ellipse = fit_ellipse(points, coverage=0.9)
        inside = sum(ellipse.contains(p, inflate=1e-9) for p in points)
        assert inside >= 0.9 * len(points)
        a, b = ellipse.semi_axes
        assert a >= b
        # 主軸は x 方向
        assert abs(math.cos(ellipse.angle)) > 0.9

    def test_fit_single_point(self):
        """1点なら下限半径の円"""
        ellipse = fit_ellipse(np.array([[1.0, 2.0]]), min_semi_axis=0.04)
        assert ellipse.semi_axes == (0.04, 0.04)
        np.testing.assert_allclose(ellipse.center, [1.0, 2.0])

    def test_fit_empty(self):
        """空の点集合はエラー"""
        with pytest.raises(ParameterError):
            fit_ellipse(np.zeros((0, 2)))


class TestRigidPose:
    """剛体姿勢のテスト"""

    def test_interp_midpoint(self):
        """I → Rz(π/2) の中点は Rz(π/4)"""
        a = RigidPose.identity()
        b = RigidPose.from_rotation_matrix(rot_z(math.pi / 2), [1.0, 0.0, 0.0])
        mid = interp_se3(a, b, 0.5)
        assert f_d_rot(mid.rotation_matrix, rot_z(math.pi / 4)) == pytest.approx(0.0, abs=1e-6)
        np.testing.assert_allclose(mid.translation, [0.5, 0.0, 0.0])

    def test_interp_endpoints(self):
        """α = 0, 1 で端点"""
        a = RigidPose.from_xyz_rpy([0.0, 1.0, 0.0], [0.1, 0.2, 0.3])
        b = RigidPose.from_xyz_rpy([1.0, 0.0, 0.5], [0.0, 0.0, 2.0])
        assert interp_se3(a, b, 0.0) is a
        assert interp_se3(a, b, 1.0) is b

    def test_compose_inverse(self):
        """P ∘ P⁻¹ = I"""
        pose = RigidPose.from_xyz_rpy([0.3, -0.2, 0.8], [0.4, -0.1, 1.2])
        product = pose @ pose.inverse()
        pos, rot = product.distance_to(RigidPose.identity())
        assert pos == pytest.approx(0.0, abs=1e-12)
        assert rot == pytest.approx(0.0, abs=1e-7)

    def test_dict_roundtrip(self):
        """辞書形式の往復"""
        pose = RigidPose.from_planar(1.0, 2.0, 0.5, 0.3)
        again = RigidPose.from_dict(pose.to_dict())
        np.testing.assert_allclose(again.matrix, pose.matrix, atol=1e-12)
        assert again.yaw == pytest.approx(0.5)
