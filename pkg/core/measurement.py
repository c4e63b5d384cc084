"""
测量模型：排队长度 → 分段期望速度

双状态交通假设：排队部分以 v_jam 行驶，非排队部分以 v_free 行驶；
部分排队的分段速度等于分段长度除以两部分旅行时间之和（调和形式）。
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy.signal import find_peaks

from .exceptions import RegimeEstimationError
from .models import SectionGeometry, SpeedRegimes

logger = logging.getLogger(__name__)

# 直方图分析参数
DEFAULT_BIN_WIDTH = 1.0
DEFAULT_MODE_SEPARATION = 3.0
MIN_REGIME_SAMPLES = 100


def expected_speed(x: float, segment: Tuple[float, float], regimes: SpeedRegimes) -> float:
    """
    单个分段的期望 aFCD 速度

    Args:
        x: 排队长度（m）
        segment: (l, r)，从停车线起算
        regimes: 双状态速度

    Returns:
        x ≤ l 时为 v_free；x > r 时为 v_jam；否则为 (r−l) / ((x−l)/v_jam + (r−x)/v_free)
    """
    l, r = segment
    if x <= l:
        return regimes.v_free
    if x > r:
        return regimes.v_jam
    return (r - l) / ((x - l) / regimes.v_jam + (r - x) / regimes.v_free)


def _partial_terms(x: float, segments: np.ndarray, regimes: SpeedRegimes):
    l = segments[:, 0]
    r = segments[:, 1]
    # 在 [l, r] 上取值，越界部分的结果会被外层 where 覆盖
    xc = np.clip(x, l, r)
    travel = (xc - l) / regimes.v_jam + (r - xc) / regimes.v_free
    return l, r, travel


@dataclass(frozen=True)
class MeasurementModel:
    """h(·)：把排队长度映射为 N 个分段的期望速度"""
    geometry: SectionGeometry
    regimes: SpeedRegimes

    @property
    def n_segments(self) -> int:
        return self.geometry.n_segments

    def expected_speeds(self, x: float) -> np.ndarray:
        return expected_speeds(x, self)

    def jacobian(self, x: float) -> np.ndarray:
        return jacobian_h(x, self)


def expected_speeds(x: float, model: MeasurementModel) -> np.ndarray:
    """对每个分段依次应用 expected_speed，返回长度 N 的向量"""
    segments = model.geometry.segment_array
    regimes = model.regimes
    l, r, travel = _partial_terms(float(x), segments, regimes)
    partial = (r - l) / travel
    return np.where(x <= l, regimes.v_free, np.where(x > r, regimes.v_jam, partial))


def jacobian_h(x: float, model: MeasurementModel) -> np.ndarray:
    """
    期望速度对排队长度的导数（逐分段）

    分段函数在 x = l、x = r 处连续但不可导，这里统一取右极限：
    x = l 处取部分排队分支的导数，x = r 处取 0。
    """
    segments = model.geometry.segment_array
    regimes = model.regimes
    l, r, travel = _partial_terms(float(x), segments, regimes)
    slope = 1.0 / regimes.v_jam - 1.0 / regimes.v_free
    partial = -(r - l) * slope / travel ** 2
    inside = (x >= l) & (x < r)
    return np.where(inside, partial, 0.0)


def _histogram(samples: np.ndarray, bin_width: float):
    low = np.floor(samples.min() / bin_width) * bin_width
    high = np.ceil(samples.max() / bin_width) * bin_width
    if high <= low:
        high = low + bin_width
    edges = np.arange(low, high + bin_width * 0.5, bin_width)
    if edges.size < 2:
        edges = np.array([low, low + bin_width])
    counts, edges = np.histogram(samples, bins=edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return counts, centers


def _dump_histogram(path: Union[str, Path], centers: np.ndarray, counts: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["speed_mps", "count"])
        for center, count in zip(centers, counts):
            writer.writerow([f"{center:.3f}", int(count)])


def estimate_regimes(
    samples: np.ndarray,
    bin_width: float = DEFAULT_BIN_WIDTH,
    min_separation: float = DEFAULT_MODE_SEPARATION,
    histogram_path: Optional[Union[str, Path]] = None,
) -> SpeedRegimes:
    """
    从观测到的 aFCD 速度分布中取两个主峰作为 v_jam / v_free

    主峰定义：局部极大值按高度排序，取最高者，再取与它相距 ≥ min_separation 的次高者。
    峰位用峰所在箱及其相邻箱内样本的均值细化。

    Args:
        samples: 扁平速度样本（NaN 会被忽略）
        bin_width: 直方图箱宽（m/s）
        min_separation: 两个主峰的最小间隔（m/s）
        histogram_path: 可选，写出直方图 CSV 供检查

    Raises:
        RegimeEstimationError: 样本少于 100 个或找不到两个主峰
    """
    values = np.asarray(samples, dtype=float).ravel()
    values = values[np.isfinite(values)]
    if values.size < MIN_REGIME_SAMPLES:
        raise RegimeEstimationError(
            f"速度样本不足: {values.size} < {MIN_REGIME_SAMPLES}"
        )

    counts, centers = _histogram(values, bin_width)
    if histogram_path is not None:
        _dump_histogram(histogram_path, centers, counts)
    diagnostic = {"centers": centers.tolist(), "counts": counts.astype(float).tolist()}

    # 两端补零，使边缘箱也能成为局部极大值
    padded = np.concatenate([[0], counts, [0]])
    peaks, _ = find_peaks(padded, height=1)
    peaks = peaks - 1
    if peaks.size < 2:
        raise RegimeEstimationError("速度分布为单峰，无法区分拥堵与自由流状态", diagnostic)

    order = peaks[np.argsort(-counts[peaks], kind="stable")]
    first = order[0]
    second = next(
        (p for p in order[1:] if abs(centers[p] - centers[first]) >= min_separation), None
    )
    if second is None:
        raise RegimeEstimationError(
            f"找不到间隔 ≥ {min_separation} m/s 的第二个主峰", diagnostic
        )

    def refine(peak: int) -> float:
        lo = centers[peak] - 1.5 * bin_width
        hi = centers[peak] + 1.5 * bin_width
        near = values[(values >= lo) & (values < hi)]
        return float(near.mean()) if near.size else float(centers[peak])

    modes = sorted([refine(first), refine(second)])
    regimes = SpeedRegimes(v_free=modes[1], v_jam=modes[0])
    logger.info("速度双峰估计: v_jam=%.2f m/s, v_free=%.2f m/s", regimes.v_jam, regimes.v_free)
    return regimes
