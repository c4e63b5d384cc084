"""
增益网络输入特征与局部测量分组

分组：每个内部分段 i（0 基下标 1..N−2）与左右邻居组成三元组，
边界分段（0 与 N−1）不作为中心，因此分组数 G = N − 2，与网络维度无关。
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from core.exceptions import GroupingError
from .config import GROUP_SIZE

MIN_SEGMENTS = GROUP_SIZE


def group_indices(n_segments: int) -> np.ndarray:
    """(G, 3) 下标矩阵，第 g 行为 [i−1, i, i+1]，i = g + 1"""
    if n_segments < MIN_SEGMENTS:
        raise GroupingError(f"分段数 {n_segments} < {MIN_SEGMENTS}，无法做局部分组更新")
    centers = np.arange(1, n_segments - 1)
    return np.stack([centers - 1, centers, centers + 1], axis=1)


def build_groups(y_t: Sequence[float], y_prev: Sequence[float], y_pred: Sequence[float],
                 n_segments: int) -> List[Tuple[int, np.ndarray, np.ndarray]]:
    """
    逐组构造 (中心下标 i, Δỹⁱ, Δȳⁱ)

    Δỹⁱ = (y_t − y_{t−1})[i−1:i+2]，Δȳⁱ = (y_t − ŷ_{t|t−1})[i−1:i+2]

    Raises:
        GroupingError: N < 3 或向量长度不等于 N
    """
    y_t = np.asarray(y_t, dtype=float)
    y_prev = np.asarray(y_prev, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    for name, vec in (("y_t", y_t), ("y_prev", y_prev), ("y_pred", y_pred)):
        if vec.shape != (n_segments,):
            raise GroupingError(f"{name} 长度 {vec.shape} 与分段数 {n_segments} 不一致")
    idx = group_indices(n_segments)
    d_meas = y_t - y_prev
    d_innov = y_t - y_pred
    return [(int(row[1]), d_meas[row], d_innov[row]) for row in idx]


@dataclass(frozen=True)
class GainFeatures:
    """
    一步的全部输入特征（物理单位）

    d_meas / d_innov：(G, 3)，m/s；d_evol / d_update：标量，m（t−1 时刻的值）
    """
    d_meas: np.ndarray
    d_innov: np.ndarray
    d_evol: float
    d_update: float

    def __post_init__(self) -> None:
        for name in ("d_meas", "d_innov"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 2 or arr.shape[1] != GROUP_SIZE:
                raise GroupingError(f"{name} 必须为 (G, {GROUP_SIZE})，实际 {arr.shape}")
            object.__setattr__(self, name, arr)
        if self.d_meas.shape != self.d_innov.shape:
            raise GroupingError(f"Δỹ 与 Δȳ 分组数不一致: {self.d_meas.shape} vs {self.d_innov.shape}")

    @property
    def n_groups(self) -> int:
        return int(self.d_meas.shape[0])

    @classmethod
    def from_groups(cls, groups: List[Tuple[int, np.ndarray, np.ndarray]],
                    d_evol: float, d_update: float) -> "GainFeatures":
        return cls(
            d_meas=np.stack([g[1] for g in groups]),
            d_innov=np.stack([g[2] for g in groups]),
            d_evol=float(d_evol),
            d_update=float(d_update),
        )


@dataclass(frozen=True)
class FeatureScale:
    """特征归一化：排队量 / q_max，速度量 / v_free"""
    q_max: float
    v_free: float

    @property
    def gain_scale(self) -> float:
        """网络输出（归一化增益）→ 物理增益（m per m/s）"""
        return self.q_max / self.v_free


def grouped_update(x_prior: float, gains: np.ndarray, innovations: np.ndarray) -> float:
    """
    x_post_raw = x_prior + Σ_i Kⁱ·Δȳⁱ（未截断，截断由调用方负责）

    Args:
        gains: (G, 3) 物理增益
        innovations: (G, 3) 分组新息
    """
    gains = np.atleast_2d(np.asarray(gains, dtype=float))
    innovations = np.atleast_2d(np.asarray(innovations, dtype=float))
    if gains.shape != innovations.shape or gains.shape[0] < 1:
        raise GroupingError(f"增益 {gains.shape} 与新息 {innovations.shape} 形状不一致或为空")
    return float(x_prior + np.sum(gains * innovations))
