"""
评估指标：RMSE / MAE / MAPE、高峰时段切片、提升率、排队起始滞后、逐步误差导出
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.exceptions import AlignmentError, QueueNetDataError, QueueNetNumericError
from core.models import BASE_STEP_S, DEFAULT_DAY_START, parse_clock

logger = logging.getLogger(__name__)

MAPE_MIN_TRUTH_M = 10.0
ONSET_THRESHOLD_M = 50.0
ALL_DAY = "all_day"
DEFAULT_PEAKS: Dict[str, Tuple[str, str]] = {
    "morning_peak": ("07:00", "09:00"),
    "afternoon_peak": ("16:00", "18:00"),
}
METRIC_NAMES = ("rmse_m", "mae_m", "mape_pct")


@dataclass(frozen=True)
class ScopeMetrics:
    """一个方法在一个时段上的指标；MAPE 支撑为空时 mape_pct 为 None（未定义）"""
    rmse_m: float
    mae_m: float
    mape_pct: Optional[float]
    n_steps: int

    def value(self, metric: str) -> Optional[float]:
        return getattr(self, metric)


def _aligned(truth: Sequence[float], estimate: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if truth.shape != estimate.shape:
        raise AlignmentError(f"真值长度 {truth.shape} 与估计长度 {estimate.shape} 不一致")
    return truth, estimate


def score(truth: Sequence[float], estimate: Sequence[float]) -> ScopeMetrics:
    """
    RMSE、MAE 与 MAPE = 100·mean(|x − x̂| / x)，MAPE 只统计 x > 10 m 的步

    Raises:
        AlignmentError: 长度不一致
        QueueNetDataError: 序列为空
    """
    truth, estimate = _aligned(truth, estimate)
    if truth.size == 0:
        raise QueueNetDataError("没有可评估的时间步")
    err = estimate - truth
    support = truth > MAPE_MIN_TRUTH_M
    mape = float(100.0 * np.mean(np.abs(err[support]) / truth[support])) if support.any() else None
    return ScopeMetrics(
        rmse_m=float(np.sqrt(np.mean(err ** 2))),
        mae_m=float(np.mean(np.abs(err))),
        mape_pct=mape,
        n_steps=int(truth.size),
    )


def scope_masks(t0: Optional[datetime], steps: int,
                peaks: Mapping[str, Tuple[str, str]] = DEFAULT_PEAKS,
                step_s: int = BASE_STEP_S) -> Dict[str, np.ndarray]:
    """
    全天与各高峰时段的布尔掩码

    t0 缺省时视为日窗口起点 06:00。高峰窗口为左闭右开的钟点区间。
    """
    start = parse_clock(DEFAULT_DAY_START) if t0 is None else timedelta(
        hours=t0.hour, minutes=t0.minute, seconds=t0.second)
    clock = start.total_seconds() + np.arange(steps) * step_s
    masks = {ALL_DAY: np.ones(steps, dtype=bool)}
    for name, (begin, end) in peaks.items():
        lo, hi = parse_clock(begin).total_seconds(), parse_clock(end).total_seconds()
        masks[name] = (clock >= lo) & (clock < hi)
    return masks


@dataclass
class MetricsReport:
    """方法 → 时段 → 指标"""
    entries: Dict[str, Dict[str, ScopeMetrics]] = field(default_factory=dict)

    def add(self, method: str, scope: str, metrics: ScopeMetrics) -> None:
        self.entries.setdefault(method, {})[scope] = metrics

    def get(self, method: str, scope: str = ALL_DAY) -> ScopeMetrics:
        try:
            return self.entries[method][scope]
        except KeyError as exc:
            raise QueueNetDataError(f"报告中没有 {method} / {scope}") from exc

    @property
    def methods(self) -> List[str]:
        return list(self.entries)

    @property
    def scopes(self) -> List[str]:
        seen: List[str] = []
        for per_scope in self.entries.values():
            seen.extend(s for s in per_scope if s not in seen)
        return seen

    def best(self, methods: Iterable[str], scope: str = ALL_DAY, metric: str = "rmse_m") -> str:
        """指定方法中该指标最小者（指标未定义的方法不参与）"""
        candidates = [(self.get(m, scope).value(metric), m) for m in methods]
        candidates = [(v, m) for v, m in candidates if v is not None]
        if not candidates:
            raise QueueNetDataError(f"没有可比较的 {metric}")
        return min(candidates)[1]

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"method": method, "scope": scope, **asdict(metrics)}
            for method, per_scope in self.entries.items()
            for scope, metrics in per_scope.items()
        ]
        return pd.DataFrame(rows, columns=["method", "scope", *METRIC_NAMES, "n_steps"])

    def to_dict(self) -> Dict[str, Dict[str, Dict[str, Optional[float]]]]:
        return {m: {s: asdict(v) for s, v in per.items()} for m, per in self.entries.items()}


def compute_metrics(
    truth: Sequence[float],
    estimate: Sequence[float],
    t0: Optional[datetime] = None,
    peaks: Mapping[str, Tuple[str, str]] = DEFAULT_PEAKS,
    method: str = "estimate",
    report: Optional[MetricsReport] = None,
    step_s: int = BASE_STEP_S,
) -> MetricsReport:
    """
    单日多时段指标；没有任何步落入的高峰时段不写入报告

    Args:
        truth / estimate: 对齐的 10 s 序列
        t0: 第 0 步的时刻（决定高峰切片）
        peaks: 高峰窗口 {名称: (开始, 结束)}
        method: 报告中的方法名
        report: 追加到已有报告
    """
    truth, estimate = _aligned(truth, estimate)
    report = report if report is not None else MetricsReport()
    for scope, mask in scope_masks(t0, truth.size, peaks, step_s).items():
        if mask.any():
            report.add(method, scope, score(truth[mask], estimate[mask]))
    return report


@dataclass
class EvaluatedDay:
    """一天的真值与各方法估计"""
    t0: datetime
    truth: np.ndarray
    estimates: Dict[str, np.ndarray]
    label: str = ""


def pooled_report(days: Sequence[EvaluatedDay],
                  peaks: Mapping[str, Tuple[str, str]] = DEFAULT_PEAKS,
                  step_s: int = BASE_STEP_S) -> MetricsReport:
    """多日合并：每个时段把所有天的对应步拼接后再计算指标"""
    if not days:
        raise QueueNetDataError("没有可评估的日数据")
    pooled: Dict[str, Dict[str, List[np.ndarray]]] = {}
    for day in days:
        masks = scope_masks(day.t0, day.truth.size, peaks, step_s)
        for method, estimate in day.estimates.items():
            truth, estimate = _aligned(day.truth, estimate)
            for scope, mask in masks.items():
                slot = pooled.setdefault(method, {}).setdefault(scope, [[], []])
                slot[0].append(truth[mask])
                slot[1].append(estimate[mask])
    report = MetricsReport()
    for method, per_scope in pooled.items():
        for scope, (truths, estimates) in per_scope.items():
            truth = np.concatenate(truths)
            if truth.size:
                report.add(method, scope, score(truth, np.concatenate(estimates)))
    return report


def _pct(baseline: Optional[float], method: Optional[float]) -> Optional[float]:
    if baseline is None or method is None:
        return None
    if baseline == 0:
        raise QueueNetNumericError("对照方法指标为 0，提升率未定义")
    return 100.0 * (baseline - method) / baseline


def improvement(baseline: Union[float, ScopeMetrics, None],
                method: Union[float, ScopeMetrics, None]) -> Union[Optional[float], Dict[str, Optional[float]]]:
    """
    提升率 100·(baseline − method) / baseline

    传入 ScopeMetrics 时逐指标返回字典；MAPE 未定义时对应结果为 None。

    Raises:
        QueueNetNumericError: 对照指标为 0
    """
    if isinstance(baseline, ScopeMetrics) and isinstance(method, ScopeMetrics):
        return {name: _pct(baseline.value(name), method.value(name)) for name in METRIC_NAMES}
    return _pct(baseline, method)


def first_crossing(series: Sequence[float], threshold_m: float = ONSET_THRESHOLD_M,
                   mask: Optional[np.ndarray] = None) -> Optional[int]:
    """掩码范围内首次达到阈值的步序号"""
    values = np.asarray(series, dtype=float)
    hits = values >= threshold_m
    if mask is not None:
        hits &= mask
    idx = np.flatnonzero(hits)
    return int(idx[0]) if idx.size else None


def onset_lags(truth: Sequence[float], estimate: Sequence[float],
               threshold_m: float = ONSET_THRESHOLD_M, t0: Optional[datetime] = None,
               peaks: Mapping[str, Tuple[str, str]] = DEFAULT_PEAKS,
               step_s: int = BASE_STEP_S) -> Dict[str, Optional[float]]:
    """
    排队起始滞后（s）：各时段内估计首次越过阈值的时刻减真值首次越过的时刻

    正值表示估计滞后；真值或估计在该时段内从未越过阈值时为 None。
    """
    truth, estimate = _aligned(truth, estimate)
    lags: Dict[str, Optional[float]] = {}
    for scope, mask in scope_masks(t0, truth.size, peaks, step_s).items():
        t_true = first_crossing(truth, threshold_m, mask)
        t_est = first_crossing(estimate, threshold_m, mask)
        lags[scope] = None if t_true is None or t_est is None else float((t_est - t_true) * step_s)
    return lags


def per_step_errors(t0: datetime, truth: Sequence[float], estimates: Mapping[str, Sequence[float]],
                    step_s: int = BASE_STEP_S, label: str = "") -> pd.DataFrame:
    """逐步绝对误差（长表：timestamp, day, method, abs_error_m），供箱线图使用"""
    frames = []
    for method, estimate in estimates.items():
        t, e = _aligned(truth, estimate)
        stamps = [(t0 + timedelta(seconds=step_s * k)).isoformat() for k in range(t.size)]
        frames.append(pd.DataFrame({"timestamp": stamps, "day": label, "method": method,
                                    "abs_error_m": np.abs(e - t)}))
    if not frames:
        return pd.DataFrame(columns=["timestamp", "day", "method", "abs_error_m"])
    return pd.concat(frames, ignore_index=True)


def write_errors_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8", float_format="%.4f")
    logger.info("已写出逐步误差: %s（%d 行）", path, len(frame))
    return path


def is_undefined(value: Optional[float]) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))
