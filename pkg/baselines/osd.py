"""
OSD：按速度阈值寻找排队尾部所在的分段边界

只使用 aFCD。从停车线向上游扫描，取“下游段低于阈值、相邻上游段不低于阈值”的
最远边界作为排队长度。
"""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from core.models import KMH_PER_MPS, SectionGeometry, SensorDay
from core.timebase import expand_afcd, impute_missing

logger = logging.getLogger(__name__)

OSD_THRESHOLD_KMH = 16.0


def osd_estimate(speeds_mps: Sequence[float], geometry: SectionGeometry,
                 threshold_kmh: float = OSD_THRESHOLD_KMH) -> float:
    """
    单个时刻的 OSD 排队长度

    Args:
        speeds_mps: N 个分段速度（m/s，已填补）
        geometry: 路段几何
        threshold_kmh: 速度阈值（km/h）

    Returns:
        排队长度（m）：第一段不低于阈值时为 0；全部低于阈值时为 q_max
    """
    slow = np.asarray(speeds_mps, dtype=float) * KMH_PER_MPS < threshold_kmh
    if not slow[0]:
        return 0.0
    if slow.all():
        return geometry.q_max_m
    # 边界 i 位于分段 i−1（下游）与分段 i（上游）之间
    tails = np.where(slow[:-1] & ~slow[1:])[0] + 1
    boundary = geometry.boundaries[tails[-1]]
    return float(min(boundary, geometry.q_max_m))


def osd_series(afcd_mps: np.ndarray, geometry: SectionGeometry, steps: int,
               threshold_kmh: float = OSD_THRESHOLD_KMH) -> np.ndarray:
    """把 60 s 分段速度（允许缺失）展开到 10 s 网格后逐步应用 OSD"""
    speeds = expand_afcd(impute_missing(afcd_mps), steps)
    return np.array([osd_estimate(speeds[:, k], geometry, threshold_kmh) for k in range(steps)])


def osd_day(day: SensorDay, geometry: SectionGeometry,
            threshold_kmh: float = OSD_THRESHOLD_KMH) -> np.ndarray:
    estimate = osd_series(day.afcd_speeds, geometry, day.steps, threshold_kmh)
    logger.info("OSD %s: 阈值 %.1f km/h, 平均排队 %.1f m", day.label or "", threshold_kmh,
                float(estimate.mean()))
    return estimate
