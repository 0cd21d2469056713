"""
Desk Mobile Manipulation Toolkit - Core
設定管理
"""

from .settings import (
    AlmSettings,
    CmzSettings,
    ControllerSettings,
    FrontendSettings,
    GeometrySettings,
    IrmSettings,
    OptimizerSettings,
    OracleSettings,
    SimSettings,
    ToolkitSettings,
    WorldSettings,
    dump_settings,
    load_settings,
)

__all__ = [
    "AlmSettings",
    "CmzSettings",
    "ControllerSettings",
    "FrontendSettings",
    "GeometrySettings",
    "IrmSettings",
    "OptimizerSettings",
    "OracleSettings",
    "SimSettings",
    "ToolkitSettings",
    "WorldSettings",
    "dump_settings",
    "load_settings",
]
