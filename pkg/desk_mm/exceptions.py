"""
Desk Mobile Manipulation Toolkit - 例外クラス定義
統一されたエラーハンドリングのための例外クラス群
"""

from enum import Enum
from typing import Any, Dict, List, Optional


class ErrorSeverity(Enum):
    """エラー重要度"""
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


class ErrorCategory(Enum):
    """エラーカテゴリ"""
    DOMAIN_ERROR = "domain_error"
    PARAMETER_ERROR = "parameter_error"
    KINEMATICS_ERROR = "kinematics_error"
    PLANNING_ERROR = "planning_error"
    OPTIMIZATION_ERROR = "optimization_error"
    CONTROL_ERROR = "control_error"
    CONFIG_ERROR = "config_error"
    SCENARIO_ERROR = "scenario_error"
    VALIDATION_ERROR = "validation_error"
    UNKNOWN_ERROR = "unknown_error"


class DeskMMException(Exception):
    """desk_mm基底例外クラス"""

    category: ErrorCategory = ErrorCategory.UNKNOWN_ERROR
    severity: ErrorSeverity = ErrorSeverity.MEDIUM
    default_suggestions: List[str] = []

    def __init__(self,
                 message: str,
                 details: Optional[str] = None,
                 recovery_suggestions: Optional[List[str]] = None):
        self.message = message
        self.details = details
        self.recovery_suggestions = list(recovery_suggestions or self.default_suggestions)
        super().__init__(self.message)

    def __str__(self) -> str:
        if self.details:
            return f"{self.message}: {self.details}"
        return self.message

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return {
            "type": type(self).__name__,
            "message": self.message,
            "details": self.details,
            "category": self.category.value,
            "severity": self.severity.value,
            "recovery_suggestions": self.recovery_suggestions,
        }


class DomainError(DeskMMException):
    """関数の定義域外の入力"""
    category = ErrorCategory.DOMAIN_ERROR


class ParameterError(DeskMMException):
    """パラメータの組み合わせが不正"""
    category = ErrorCategory.PARAMETER_ERROR


class SingularityError(DeskMMException):
    """特異点近傍で式が定義できない"""
    category = ErrorCategory.KINEMATICS_ERROR
    default_suggestions = ["ベース速度が最小速度 v_min 以上であることを確認してください"]


class UnknownFrameError(DeskMMException):
    """存在しないフレーム/リンク指定"""
    category = ErrorCategory.KINEMATICS_ERROR


class UnreachableTaskError(DeskMMException):
    """どの把持候補でも到達不能なタスク"""
    category = ErrorCategory.PLANNING_ERROR
    severity = ErrorSeverity.HIGH
    default_suggestions = [
        "把持候補を追加してください",
        "IRMの解像度を細かくしてください",
    ]


class CmzInfeasibleError(DeskMMException):
    """CMZの縮小下限でも到達領域の共通部分が空"""
    category = ErrorCategory.PLANNING_ERROR
    severity = ErrorSeverity.HIGH


class SearchFailure(DeskMMException):
    """ベース経路探索の失敗"""
    category = ErrorCategory.PLANNING_ERROR
    severity = ErrorSeverity.HIGH

    def __init__(self, message: str, details: Optional[str] = None,
                 best_progress: int = 0, expanded_nodes: int = 0):
        super().__init__(message, details)
        self.best_progress = best_progress
        self.expanded_nodes = expanded_nodes

    def to_dict(self) -> Dict[str, Any]:
        result = super().to_dict()
        result.update({"best_progress": self.best_progress,
                       "expanded_nodes": self.expanded_nodes})
        return result


class ArmSearchFailure(DeskMMException):
    """層状グラフ探索の失敗"""
    category = ErrorCategory.PLANNING_ERROR
    severity = ErrorSeverity.HIGH

    def __init__(self, message: str, details: Optional[str] = None, layer: int = -1):
        super().__init__(message, details)
        self.layer = layer


class OptimizationError(DeskMMException):
    """最適化問題の構築/求解エラー"""
    category = ErrorCategory.OPTIMIZATION_ERROR
    severity = ErrorSeverity.HIGH


class ControlError(DeskMMException):
    """制御器のエラー"""
    category = ErrorCategory.CONTROL_ERROR


class WarpScheduleError(ControlError):
    """ワーピング窓が重なっている"""
    severity = ErrorSeverity.HIGH
    default_suggestions = ["タスク間の時間を延ばすか T_sw を短くしてください"]


class ConfigurationError(DeskMMException):
    """設定ファイル関連エラー"""
    category = ErrorCategory.CONFIG_ERROR
    severity = ErrorSeverity.HIGH


class ScenarioError(DeskMMException):
    """シナリオ定義/実行エラー"""
    category = ErrorCategory.SCENARIO_ERROR
    severity = ErrorSeverity.HIGH


class ValidationError(DeskMMException):
    """データ検証エラー"""
    category = ErrorCategory.VALIDATION_ERROR
