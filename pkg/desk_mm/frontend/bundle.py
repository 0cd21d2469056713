"""
Desk Mobile Manipulation Toolkit - Warm-start Bundle
フロントエンド結果のテキスト出力
"""

import logging
from pathlib import Path
from typing import Any, Dict, Union

import yaml

from .arm_search import WholeBodyPath

logger = logging.getLogger(__name__)

BUNDLE_FORMAT_VERSION = "1.0"


def warm_start_to_dict(path: WholeBodyPath) -> Dict[str, Any]:
    data = {"version": BUNDLE_FORMAT_VERSION}
    data.update(path.to_dict())
    return data


def save_warm_start(path: WholeBodyPath, out: Union[str, Path]) -> Path:
    """ウォームスタート束 (状態列・κ・把持・K) をYAMLで保存"""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        yaml.safe_dump(warm_start_to_dict(path), f, sort_keys=False)
    logger.info(f"Warm-start bundle saved: {out}")
    return out
