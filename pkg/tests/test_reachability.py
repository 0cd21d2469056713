"""
Desk Mobile Manipulation Toolkit - Reachability Tests
逆到達可能性マップ・CMZ・キーポイント楕円のテスト
"""

import math
import tempfile
from unittest.mock import Mock

import numpy as np
import pytest

from desk_mm.core.settings import CmzSettings, IrmSettings
from desk_mm.exceptions import CmzInfeasibleError, ParameterError, UnreachableTaskError
from desk_mm.geometry.se3 import RigidPose
from desk_mm.performance.cache_manager import IrmCache, irm_cache_key
from desk_mm.reachability.cmz import CmzSampleSet, cmz_region, compute_cmz, keypoint_ellipse, sample_cmz
from desk_mm.reachability.irm import InverseReachabilityMap, approach_bin, build_irm
from desk_mm.robot.kinematics import collision_sphere_positions, fk_frame, self_collision_clearance
from desk_mm.robot.state import WholeBodyState
from desk_mm.world.scene import BoxPrimitive, build_world


def _rectangle_irm(x_range, y_range, z_levels=range(0, 41)):
    """全接近方向・全高さで同じ長方形オフセットを返す合成IRM"""
    offsets = np.array([(x, y) for x in x_range for y in y_range], dtype=int)
    table = {(b, z): offsets for b in range(26) for z in z_levels}
    return InverseReachabilityMap("synthetic", 0.05, 1, 0.05, table)


class TestInverseReachabilityMap:
    """IRM構築のテスト"""

    def setup_method(self):
        self.settings = IrmSettings(joint_samples=9)

    def test_generating_configuration_contained(self, planar3):
        """生成に使った関節角の手先姿勢で原点セルが得られる"""
        irm = build_irm(planar3, self.settings)
        assert irm.sample_count == 9 ** 3
        grid = [np.linspace(lo, hi, 9) for lo, hi in zip(planar3.q_min, planar3.q_max)]
        rng = np.random.default_rng(0)
        for _ in range(10):
            arm = np.array([g[rng.integers(0, 9)] for g in grid])
            state = WholeBodyState(np.zeros(3), arm)
            centers = np.array([c for c, _, _ in collision_sphere_positions(planar3, state)])
            if self_collision_clearance(planar3, centers) <= 0.0:
                continue
            pose = fk_frame(planar3, state)
            cells = irm.query_with_yaw(pose)
            assert any(c[0] == 0 and c[1] == 0 and c[2] == 0 for c in cells)

    def test_unreachable_height(self, planar3):
        """到達不能な高さは空集合"""
        irm = build_irm(planar3, self.settings)
        assert len(irm.query(RigidPose.from_xyz_rpy([0.0, 0.0, 3.0]))) == 0

    def test_parallel_build_matches_serial(self, planar3):
        """並列構築と逐次構築が同じ表を作る"""
        settings = IrmSettings(joint_samples=7, chunk_size=50)
        serial = build_irm(planar3, settings)
        parallel = build_irm(planar3, settings, workers=4)
        assert serial.table.keys() == parallel.table.keys()
        for key in serial.table:
            np.testing.assert_array_equal(serial.table[key], parallel.table[key])

    def test_approach_bin(self):
        """座標軸方向は対応するビンへ"""
        up = approach_bin(np.array([0.0, 0.0, 1.0]))[0]
        tilted = approach_bin(np.array([0.05, 0.0, 0.998]))[0]
        down = approach_bin(np.array([0.0, 0.0, -1.0]))[0]
        assert up == tilted
        assert up != down


class TestIrmCache:
    """IRMキャッシュのテスト"""

    def test_roundtrip_and_stats(self, planar3):
        """保存・再読込とヒット率"""
        settings = IrmSettings(joint_samples=5)
        builder = Mock(side_effect=lambda: build_irm(planar3, settings))
        with tempfile.TemporaryDirectory() as temp_dir:
            cache = IrmCache(temp_dir)
            first = cache.get_or_build(planar3, settings, builder)
            assert builder.call_count == 1
            fresh = IrmCache(temp_dir)
            second = fresh.get_or_build(planar3, settings, builder)
            assert builder.call_count == 1
            assert fresh.stats.cache_hits == 1
            assert second.table.keys() == first.table.keys()

    def test_corrupt_file_is_miss(self, planar3):
        """破損ファイルはミス扱い"""
        settings = IrmSettings(joint_samples=5)
        with tempfile.TemporaryDirectory() as temp_dir:
            cache = IrmCache(temp_dir)
            path = cache.path_for(irm_cache_key(planar3, settings))
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(b"not a pickle")
            assert cache.get(planar3, settings) is None
            assert cache.stats.invalid_entries == 1

    def test_key_depends_on_resolution(self, planar3):
        """解像度が変わるとキーも変わる"""
        assert irm_cache_key(planar3, IrmSettings()) != irm_cache_key(planar3, IrmSettings(yaw_bins=8))


class TestCmzSampling:
    """CMZサンプリングのテスト"""

    def setup_method(self):
        self.nominal = RigidPose.from_xyz_rpy([0.0, 0.0, 0.5], [math.pi, 0.0, 0.0])

    def test_degenerate_sphere(self):
        """r_cmz = 0, δ_tilt = 0 は公称姿勢1つ"""
        samples = sample_cmz(self.nominal, 0.0, 0.0, math.pi / 4, math.pi / 4, math.pi / 4)
        assert len(samples) == 1
        pos, rot = samples.poses[0].distance_to(self.nominal)
        assert pos == pytest.approx(0.0) and rot == pytest.approx(0.0, abs=1e-7)

    def test_position_count_before_dedup(self):
        """Δφ = Δθ = π/2 で (4+1)(2+1) 点"""
        samples = sample_cmz(self.nominal, 0.05, 0.0, math.pi / 2, math.pi / 2, 2 * math.pi)
        assert samples.raw_position_count == 15
        assert len(samples) < 15

    def test_tilted_orientations(self):
        """傾き付きサンプルは公称接近軸から δ_tilt だけ傾く"""
        samples = sample_cmz(self.nominal, 0.0, 0.1, math.pi / 4, math.pi / 4, math.pi / 2)
        assert len(samples) == 4
        for pose in samples.poses:
            angle = math.acos(np.clip(pose.z_axis @ self.nominal.z_axis, -1.0, 1.0))
            assert angle == pytest.approx(0.1, abs=1e-9)

    def test_obstacle_below_discards_lower_hemisphere(self):
        """下方の障害物で下半球のサンプルが除かれる"""
        floor = BoxPrimitive(center=(0.0, 0.0, 0.2), size=(2.0, 2.0, 0.4))
        world = build_world([floor], resolution=0.05)
        samples = sample_cmz(self.nominal, 0.05, 0.0, math.pi / 4, math.pi / 4, math.pi / 4,
                             world, sphere_radius=0.1)
        assert samples.discarded > 0
        assert all(p.translation[2] >= 0.5 - 1e-9 for p in samples.poses)

    def test_invalid_resolution(self):
        """非正の解像度はエラー"""
        with pytest.raises(ParameterError):
            sample_cmz(self.nominal, 0.05, 0.1, 0.0, math.pi / 4, math.pi / 4)


class TestCmzRegion:
    """CMZ到達領域のテスト"""

    def setup_method(self):
        self.nominal = RigidPose.from_xyz_rpy([0.0, 0.0, 0.5])

    def test_rectangle_center(self):
        """長方形セル集合の楕円中心は長方形の中心"""
        irm = _rectangle_irm(range(2, 7), range(-2, 3))
        samples = sample_cmz(self.nominal, 0.0, 0.0, math.pi / 4, math.pi / 4, math.pi / 4)
        region = cmz_region(samples, irm, self.nominal)
        assert not region.needs_reduction
        np.testing.assert_allclose(region.ellipse.center, [-0.2, 0.0], atol=1e-9)
        assert len(region.cells) == 25

    def test_disjoint_sets_need_reduction(self):
        """共通部分が空なら縮小の合図"""
        irm = _rectangle_irm(range(0, 3), range(0, 3))
        far = RigidPose.from_xyz_rpy([5.0, 0.0, 0.5])
        samples = CmzSampleSet(self.nominal, [self.nominal, far], 0.05, 0.0, 1.0, 1.0, 1.0)
        assert cmz_region(samples, irm, self.nominal).needs_reduction

    def test_area_monotone_in_radius(self):
        """r_cmz が大きいほど楕円面積は増えない"""
        irm = _rectangle_irm(range(0, 21), range(-10, 11))
        areas = []
        for radius in (0.05, 0.1, 0.2):
            samples = sample_cmz(self.nominal, radius, 0.0, math.pi / 4, math.pi / 4, math.pi / 4)
            areas.append(cmz_region(samples, irm, self.nominal).ellipse.area)
        assert areas[0] >= areas[1] - 1e-12
        assert areas[1] >= areas[2] - 1e-12

    def test_radius_reduction(self):
        """共通部分が空なら r_cmz を半減して再試行"""
        irm = _rectangle_irm(range(0, 3), range(0, 3))
        settings = CmzSettings(radius=0.2, tilt=0.0)
        region = compute_cmz(self.nominal, irm, None, settings)
        assert region.radius < 0.2
        assert not region.needs_reduction

    def test_infeasible(self):
        """縮小しても空ならエラー"""
        empty = InverseReachabilityMap("empty", 0.05, 4, 0.05, {})
        with pytest.raises(CmzInfeasibleError):
            compute_cmz(self.nominal, empty, None, CmzSettings())


class TestKeypointEllipse:
    """キーポイント楕円のテスト"""

    def test_single_grasp(self):
        """把持1つなら単一集合のフィット"""
        irm = _rectangle_irm(range(2, 7), range(-2, 3))
        pose = RigidPose.from_xyz_rpy([1.0, 0.5, 0.5])
        ellipse = keypoint_ellipse(pose, [RigidPose.identity()], irm)
        np.testing.assert_allclose(ellipse.center, [1.0 - 0.2, 0.5], atol=1e-9)

    def test_union_of_grasps(self):
        """複数把持の和集合は各々より広い"""
        irm = _rectangle_irm(range(2, 7), range(-2, 3))
        pose = RigidPose.from_xyz_rpy([0.0, 0.0, 0.5])
        shifted = RigidPose.from_xyz_rpy([0.3, 0.0, 0.0])
        single = keypoint_ellipse(pose, [RigidPose.identity()], irm)
        union = keypoint_ellipse(pose, [RigidPose.identity(), shifted], irm)
        assert union.area > single.area

    def test_unreachable(self):
        """到達不能ならエラー、把持が空なら引数エラー"""
        empty = InverseReachabilityMap("empty", 0.05, 4, 0.05, {})
        pose = RigidPose.identity()
        with pytest.raises(UnreachableTaskError):
            keypoint_ellipse(pose, [RigidPose.identity()], empty)
        with pytest.raises(ParameterError):
            keypoint_ellipse(pose, [], empty)
