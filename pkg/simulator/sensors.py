"""
传感器仿真：线圈累积计数与 60 s 分段聚合 aFCD
"""
from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np

from core.measurement import MeasurementModel
from core.models import AFCD_STEP_S, BASE_STEP_S
from .scenario import ScenarioConfig

logger = logging.getLogger(__name__)


def sample_cumulative(event_times_s: np.ndarray, sample_times_s: np.ndarray) -> np.ndarray:
    """时刻 ≤ t 的事件数"""
    return np.searchsorted(np.sort(event_times_s), sample_times_s, side="right").astype(float)


def emit_counts(arrival_s: np.ndarray, departure_s: np.ndarray, steps: int,
                step_s: int = BASE_STEP_S) -> Tuple[np.ndarray, np.ndarray]:
    """
    10 s 累积计数

    A 统计越过上游检测器的车辆，D 统计越过停车线的车辆；
    未观测离开只出现在 A 中，不会出现在 D 中。
    """
    times = np.arange(steps, dtype=float) * step_s
    return sample_cumulative(arrival_s, times), sample_cumulative(departure_s, times)


def interval_means(queue_s: np.ndarray, n_intervals: int, interval_s: int = AFCD_STEP_S) -> np.ndarray:
    """逐秒排队序列的区间均值；最后一个区间不足时按实际样本求均值"""
    queue_s = np.asarray(queue_s, dtype=float)
    means = np.empty(n_intervals)
    for j in range(n_intervals):
        chunk = queue_s[j * interval_s:(j + 1) * interval_s]
        means[j] = chunk.mean() if chunk.size else queue_s[-1]
    return means


def delay_series(queue_s: np.ndarray, delay_s: float) -> np.ndarray:
    """q_delayed(t) = q(t − delay)，起点之前取 q(0)"""
    shift = int(round(delay_s))
    if shift <= 0:
        return np.asarray(queue_s, dtype=float)
    queue_s = np.asarray(queue_s, dtype=float)
    idx = np.maximum(np.arange(queue_s.size) - shift, 0)
    return queue_s[idx]


def emit_afcd(queue_s: np.ndarray, scenario: ScenarioConfig, n_intervals: int,
              rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    由逐秒真值排队生成 (N, n_intervals) 的 aFCD 速度

    顺序：延迟平移 → 区间平均 → 双状态期望速度 → 高斯噪声并截断到
    [0.5·v_jam, 1.2·v_free] → 按 missing_prob 随机置缺失；dead_segments 整行缺失。

    Args:
        queue_s: 逐秒真值排队（m），下标为距日起点的秒数
        scenario: 场景配置
        n_intervals: 60 s 区间数
        rng: 噪声与缺失的随机源（缺省按 scenario.seed）
    """
    rng = rng if rng is not None else np.random.default_rng(scenario.seed)
    model = MeasurementModel(scenario.geometry, scenario.regimes)
    means = interval_means(delay_series(queue_s, scenario.afcd_delay_s), n_intervals)
    speeds = np.stack([model.expected_speeds(q) for q in means], axis=1)

    if scenario.afcd_noise_sd > 0:
        speeds = speeds + rng.normal(0.0, scenario.afcd_noise_sd, speeds.shape)
    v = scenario.regimes
    speeds = np.clip(speeds, 0.5 * v.v_jam, 1.2 * v.v_free)

    if scenario.missing_prob > 0:
        speeds[rng.random(speeds.shape) < scenario.missing_prob] = np.nan
    for segment in scenario.dead_segments:
        speeds[segment, :] = np.nan
    missing = int(np.isnan(speeds).sum())
    if missing:
        logger.debug("aFCD 缺失 %d / %d 个分段区间", missing, speeds.size)
    return speeds
