"""
时间基对齐与缺失值处理

10 s 计数网格与 60 s aFCD 网格之间的换算，以及 aFCD 缺失值填补。
"""
from __future__ import annotations

import logging
from typing import Optional, Union

import numpy as np
import pandas as pd

from .exceptions import AlignmentError, MissingDataError
from .models import STEPS_PER_AFCD

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, list]


def _as_matrix(series: ArrayLike) -> np.ndarray:
    arr = np.array(series, dtype=float)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    return arr


def expand_afcd(afcd: ArrayLike, steps: int, per: int = STEPS_PER_AFCD) -> np.ndarray:
    """
    把 60 s 分段速度复制到 10 s 网格上

    Args:
        afcd: (N, T60) 或单段 (T60,) 速度序列
        steps: 目标 10 s 步数
        per: 每个 aFCD 区间包含的基础步数（默认 6）

    Returns:
        (N, steps) 速度矩阵，每个 60 s 值在其 6 个 10 s 步上重复

    Raises:
        AlignmentError: 步数超出 aFCD 覆盖范围，或相差超过一个尾部区间
    """
    matrix = _as_matrix(afcd)
    intervals = matrix.shape[1]
    if steps > per * intervals or steps <= per * (intervals - 1):
        raise AlignmentError(
            f"aFCD 区间数 {intervals} 无法对齐到 {steps} 个 10 s 步（每区间 {per} 步）"
        )
    return np.repeat(matrix, per, axis=1)[:, :steps]


def subsample_afcd(expanded: ArrayLike, per: int = STEPS_PER_AFCD) -> np.ndarray:
    """expand_afcd 的逆：每 6 步取一个"""
    return _as_matrix(expanded)[:, ::per]


def impute_missing(series: ArrayLike, causal: bool = False,
                   leading_fill: Optional[float] = None) -> np.ndarray:
    """
    用同一分段的前一个观测值填补缺失（NaN）

    Args:
        series: (N, T) 分段速度序列，缺失为 NaN
        causal: True 时不使用未来数据；前导缺失改用 leading_fill
        leading_fill: 因果模式下前导缺失的填充值（通常为 v_free）

    Returns:
        无缺失的 (N, T) 序列；非因果模式下前导缺失用该段第一个观测值回填

    Raises:
        MissingDataError: 非因果模式下某分段全部缺失
    """
    matrix = _as_matrix(series)
    empty = np.where(np.all(np.isnan(matrix), axis=1))[0]
    if empty.size and not causal:
        raise MissingDataError(f"分段 {empty.tolist()} 没有任何观测值，无法填补")

    frame = pd.DataFrame(matrix)
    missing = int(frame.isna().to_numpy().sum())
    filled = frame.ffill(axis=1)
    if causal:
        if leading_fill is not None:
            filled = filled.fillna(leading_fill)
        elif filled.isna().to_numpy().any():
            raise MissingDataError("因果填补需要 leading_fill 来处理前导缺失")
    else:
        filled = filled.bfill(axis=1)
    if missing:
        logger.debug("aFCD 缺失值填补: %d 个", missing)
    return filled.to_numpy(dtype=float)


def clamp_queue(x: Union[float, np.ndarray], q_max: float) -> Union[float, np.ndarray]:
    """把排队长度限制在 [0, q_max]"""
    clipped = np.clip(x, 0.0, q_max)
    if np.ndim(clipped) == 0:
        return float(clipped)
    return clipped
