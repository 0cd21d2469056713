"""
Desk Mobile Manipulation Toolkit - Test Fixtures
共通フィクスチャ
"""

import numpy as np
import pytest

from desk_mm.core.settings import ToolkitSettings
from desk_mm.robot.description import load_robot_description
from desk_mm.world.scene import BoxPrimitive, build_world


@pytest.fixture(scope="session")
def spatial6():
    """6自由度アーム付き移動ベース"""
    return load_robot_description("spatial6")


@pytest.fixture(scope="session")
def planar3():
    """3自由度平面アーム付き移動ベース"""
    return load_robot_description("planar3")


@pytest.fixture
def settings():
    return ToolkitSettings()


@pytest.fixture(scope="session")
def table_world():
    """原点から1.5m先に机が1つある環境"""
    table = BoxPrimitive(center=(1.5, 0.0, 0.2), size=(0.6, 0.8, 0.4))
    return build_world([table], resolution=0.05,
                       include_points=np.array([[-0.5, -0.5, 0.0], [2.0, 0.5, 1.0]]))


@pytest.fixture
def numeric_gradient():
    """中心差分による数値勾配"""
    def gradient(func, x, eps=1e-6):
        x = np.asarray(x, dtype=float)
        grad = np.zeros_like(x)
        for k in range(x.size):
            step = np.zeros_like(x)
            step.flat[k] = eps
            grad.flat[k] = (func(x + step) - func(x - step)) / (2.0 * eps)
        return grad
    return gradient
