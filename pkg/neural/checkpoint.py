"""
参数检查点（UTF-8 JSON）

{
  "format": "qnet-checkpoint", "version": 1,
  "config": {...},                      # 网络结构配置，加载时据此重建形状
  "slices": [{"name", "shape", "offset", "size"}, ...],
  "parameter_count": 955,
  "parameters": [...],                  # 扁平参数（JSON 浮点按 repr 写出，可逐位还原）
  "meta": {...}                         # 可选：训练信息
}
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from .exceptions import CheckpointError
from .store import ParameterStore

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "qnet-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: Union[str, Path], store: ParameterStore, config: Dict[str, Any],
                    meta: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config,
        "slices": store.layout(),
        "parameter_count": store.size,
        "parameters": store.values.tolist(),
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False)
    logger.info("检查点已保存: %s（%d 个参数）", path, store.size)
    return path


def read_checkpoint(path: Union[str, Path]) -> Dict[str, Any]:
    """读取并校验格式头；不做形状校验"""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"检查点不存在: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"检查点不是合法 JSON: {path}: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"未知的检查点格式: {payload.get('format')!r}")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"检查点版本不匹配: {payload.get('version')} ≠ {CHECKPOINT_VERSION}"
        )
    return payload


def restore_parameters(store: ParameterStore, payload: Dict[str, Any]) -> ParameterStore:
    """
    把检查点中的参数写入结构相同的 store

    Raises:
        CheckpointError: 切片名称 / 形状 / 总长度任一不一致
    """
    expected = store.layout()
    found = payload.get("slices") or []
    if len(found) != len(expected):
        raise CheckpointError(f"切片数量不匹配: 检查点 {len(found)}，网络 {len(expected)}")
    for want, got in zip(expected, found):
        if want["name"] != got.get("name") or list(want["shape"]) != list(got.get("shape", [])):
            raise CheckpointError(
                f"切片不匹配: 网络 {want['name']}{want['shape']}，检查点 {got.get('name')}{got.get('shape')}"
            )
    values = np.asarray(payload.get("parameters") or [], dtype=np.float64)
    if values.size != store.size:
        raise CheckpointError(f"参数长度不匹配: 检查点 {values.size}，网络 {store.size}")
    store.load(values)
    store.reset_optimizer()
    return store
