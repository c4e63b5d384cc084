"""
ISC：等速线（iso-speed contour）排队估计

把分段-时间速度场双线性插值到细网格上，对每个阈值取低于阈值的最远位置，
再在多个阈值之间取平均。
"""
from __future__ import annotations

import logging
from typing import Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from core.models import AFCD_STEP_S, BASE_STEP_S, KMH_PER_MPS, SectionGeometry, SensorDay
from core.timebase import impute_missing

logger = logging.getLogger(__name__)

ISC_THRESHOLDS_KMH: Tuple[float, ...] = (14.0, 16.0, 18.0, 20.0, 22.0)
ISC_GRID_M = 5.0


def _axis(points: np.ndarray, values: np.ndarray, axis: int):
    """单点坐标轴补一个重复点，RegularGridInterpolator 每维至少需要两个点"""
    if points.size > 1:
        return points, values
    return np.array([points[0], points[0] + 1.0]), np.repeat(values, 2, axis=axis)


def speed_field(afcd_mps: np.ndarray, geometry: SectionGeometry, steps: int,
                grid_m: float = ISC_GRID_M, step_s: int = BASE_STEP_S) -> Tuple[np.ndarray, np.ndarray]:
    """
    细网格速度场（km/h）

    分段速度定位在分段中点、区间中点；网格范围外按边界值保持。

    Returns:
        (positions (P,), field (P, steps))
    """
    values = impute_missing(afcd_mps) * KMH_PER_MPS
    centers = geometry.centers
    times = (np.arange(values.shape[1]) + 0.5) * AFCD_STEP_S
    centers, values = _axis(centers, values, 0)
    times, values = _axis(times, values, 1)
    interp = RegularGridInterpolator((centers, times), values, method="linear")

    positions = np.arange(0.0, geometry.length_m + 1e-9, grid_m)
    query_x = np.clip(positions, centers[0], centers[-1])
    query_t = np.clip(np.arange(steps) * step_s, times[0], times[-1])
    xx, tt = np.meshgrid(query_x, query_t, indexing="ij")
    field = interp(np.stack([xx.ravel(), tt.ravel()], axis=1)).reshape(xx.shape)
    return positions, field


def contour_positions(positions: np.ndarray, field: np.ndarray, threshold_kmh: float) -> np.ndarray:
    """每个时刻低于阈值的最远网格位置；没有低于阈值的网格时为 0"""
    slow = field < threshold_kmh
    any_slow = slow.any(axis=0)
    farthest = slow.shape[0] - 1 - np.argmax(slow[::-1, :], axis=0)
    return np.where(any_slow, positions[farthest], 0.0)


def isc_estimate(afcd_mps: np.ndarray, geometry: SectionGeometry, steps: int,
                 thresholds_kmh: Sequence[float] = ISC_THRESHOLDS_KMH,
                 grid_m: float = ISC_GRID_M) -> np.ndarray:
    """
    全天 ISC 排队长度序列（10 s 网格）

    Args:
        afcd_mps: (N, T60) 分段速度（m/s，允许缺失）
        geometry: 路段几何
        steps: 输出步数
        thresholds_kmh: 等速线阈值（km/h）
        grid_m: 细网格空间分辨率

    Returns:
        (steps,) 各阈值最远等速线位置的平均，截断到 q_max
    """
    positions, field = speed_field(afcd_mps, geometry, steps, grid_m)
    contours = np.stack([contour_positions(positions, field, th) for th in thresholds_kmh])
    return np.minimum(contours.mean(axis=0), geometry.q_max_m)


def isc_day(day: SensorDay, geometry: SectionGeometry,
            thresholds_kmh: Sequence[float] = ISC_THRESHOLDS_KMH) -> np.ndarray:
    estimate = isc_estimate(day.afcd_speeds, geometry, day.steps, thresholds_kmh)
    logger.info("ISC %s: 阈值 %s km/h, 平均排队 %.1f m", day.label or "",
                "/".join(f"{t:g}" for t in thresholds_kmh), float(estimate.mean()))
    return estimate
