"""
排队长度估计数据模型定义

所有领域类型都是不可变值记录（frozen dataclass），可在任意线程中共享。
时间基：计数与真值为 10 s，aFCD 为 60 s；所有序列都索引在 10 s 网格上。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import AlignmentError, ConfigError, QueueNetDataError

# ========== 时间基常量 ==========
BASE_STEP_S = 10
AFCD_STEP_S = 60
STEPS_PER_AFCD = AFCD_STEP_S // BASE_STEP_S
DEFAULT_DAY_START = "06:00"
DEFAULT_DAY_END = "20:00"
# 06:00–20:00，10 s 一步
DEFAULT_DAY_STEPS = 14 * 3600 // BASE_STEP_S

KMH_PER_MPS = 3.6


def parse_clock(clock: str) -> timedelta:
    """把 "HH:MM" 解析为距 0 点的时长"""
    try:
        hours, minutes = clock.strip().split(":")
        return timedelta(hours=int(hours), minutes=int(minutes))
    except ValueError as exc:
        raise ConfigError(f"无效的时刻格式: {clock!r}（应为 HH:MM）") from exc


def day_steps(start: str = DEFAULT_DAY_START, end: str = DEFAULT_DAY_END,
              step_s: int = BASE_STEP_S) -> int:
    """日窗口内的步数（默认 06:00–20:00 共 5040 步）"""
    span = (parse_clock(end) - parse_clock(start)).total_seconds()
    if span <= 0:
        raise ConfigError(f"日窗口结束时刻必须晚于开始时刻: {start} → {end}")
    return int(span // step_s)


@dataclass(frozen=True)
class SectionGeometry:
    """路段静态描述：长度、车道数、aFCD 分段（从停车线起算）、最大排队长度"""
    section_id: str
    length_m: float
    lanes: int
    segments: Tuple[Tuple[float, float], ...]
    q_max_m: float

    def __post_init__(self) -> None:
        segments = tuple((float(l), float(r)) for l, r in self.segments)
        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "length_m", float(self.length_m))
        object.__setattr__(self, "q_max_m", float(self.q_max_m))
        object.__setattr__(self, "lanes", int(self.lanes))

        if self.lanes < 1:
            raise ConfigError(f"车道数必须 ≥ 1: {self.lanes}")
        if not 0 < self.q_max_m <= self.length_m:
            raise ConfigError(
                f"最大排队长度必须满足 0 < q_max ≤ L: q_max={self.q_max_m}, L={self.length_m}"
            )
        if not segments:
            raise ConfigError("路段至少需要一个分段")
        if segments[0][0] != 0.0:
            raise ConfigError(f"第一个分段必须从停车线（0 m）开始: {segments[0]}")
        for i, (start, end) in enumerate(segments):
            if end <= start:
                raise ConfigError(f"分段 {i} 的终点必须大于起点: {(start, end)}")
            if i > 0 and segments[i - 1][1] != start:
                raise ConfigError(
                    f"分段必须首尾相接且不重叠: 分段 {i - 1} 终点 {segments[i - 1][1]} ≠ 分段 {i} 起点 {start}"
                )

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def segment_array(self) -> np.ndarray:
        """(N, 2) 数组，每行 (l, r)"""
        return np.asarray(self.segments, dtype=float)

    @property
    def boundaries(self) -> np.ndarray:
        """分段边界位置，长度 N+1"""
        arr = self.segment_array
        return np.concatenate([arr[:, 0], arr[-1:, 1]])

    @property
    def centers(self) -> np.ndarray:
        arr = self.segment_array
        return arr.mean(axis=1)

    @classmethod
    def uniform(cls, section_id: str, length_m: float, lanes: int, n_segments: int,
                q_max_m: Optional[float] = None) -> "SectionGeometry":
        """等长分段的便捷构造"""
        edges = np.linspace(0.0, float(length_m), n_segments + 1)
        segments = tuple((float(edges[i]), float(edges[i + 1])) for i in range(n_segments))
        return cls(section_id, length_m, lanes, segments, q_max_m if q_max_m is not None else length_m)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "section_id": self.section_id,
            "length_m": self.length_m,
            "lanes": self.lanes,
            "q_max_m": self.q_max_m,
            "segments": [list(seg) for seg in self.segments],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SectionGeometry":
        try:
            return cls(
                section_id=str(data.get("section_id", "section")),
                length_m=data["length_m"],
                lanes=data["lanes"],
                segments=tuple(tuple(seg) for seg in data["segments"]),
                q_max_m=data["q_max_m"],
            )
        except KeyError as exc:
            raise ConfigError(f"路段配置缺少字段: {exc.args[0]}") from exc


@dataclass(frozen=True)
class SpeedRegimes:
    """双状态速度：自由流速度 v_free 与拥堵（排队）速度 v_jam，单位 m/s"""
    v_free: float
    v_jam: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "v_free", float(self.v_free))
        object.__setattr__(self, "v_jam", float(self.v_jam))
        if not 0 < self.v_jam < self.v_free:
            raise ConfigError(
                f"速度状态必须满足 0 < v_jam < v_free: v_jam={self.v_jam}, v_free={self.v_free}"
            )

    def to_dict(self) -> Dict[str, float]:
        return {"v_free": self.v_free, "v_jam": self.v_jam}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SpeedRegimes":
        try:
            return cls(v_free=data["v_free"], v_jam=data["v_jam"])
        except KeyError as exc:
            raise ConfigError(f"速度状态配置缺少字段: {exc.args[0]}") from exc


def _frozen(values: Any) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SensorDay:
    """
    一天对齐后的传感器序列

    - cum_inflow / cum_outflow：10 s 累积计数 A_t / D_t
    - afcd_speeds：(N, T60) 的 60 s 分段速度，缺失为 NaN
    - ground_truth_m：可选 10 s 真值排队长度
    """
    t0: datetime
    cum_inflow: np.ndarray
    cum_outflow: np.ndarray
    afcd_speeds: np.ndarray
    ground_truth_m: Optional[np.ndarray] = None
    step_s: int = BASE_STEP_S
    label: str = ""

    def __post_init__(self) -> None:
        inflow = _frozen(self.cum_inflow)
        outflow = _frozen(self.cum_outflow)
        afcd = np.array(self.afcd_speeds, dtype=float)
        if afcd.ndim == 1:
            afcd = afcd[np.newaxis, :]
        afcd.setflags(write=False)
        object.__setattr__(self, "cum_inflow", inflow)
        object.__setattr__(self, "cum_outflow", outflow)
        object.__setattr__(self, "afcd_speeds", afcd)
        if self.ground_truth_m is not None:
            object.__setattr__(self, "ground_truth_m", _frozen(self.ground_truth_m))

        if inflow.shape != outflow.shape or inflow.ndim != 1:
            raise AlignmentError(
                f"累积流入 / 流出长度不一致: {inflow.shape} vs {outflow.shape}"
            )
        for name, series in (("cum_inflow", inflow), ("cum_outflow", outflow)):
            if series.size and (np.any(series < 0) or np.any(np.diff(series) < 0)):
                raise QueueNetDataError(f"{name} 必须非负且单调不减")

        per = self.steps_per_afcd
        steps = inflow.size
        if afcd.shape[1] not in (steps // per, -(-steps // per)):
            raise AlignmentError(
                f"aFCD 长度 {afcd.shape[1]} × {per} 与计数长度 {steps} 不匹配（超出一个尾部区间）"
            )
        if self.ground_truth_m is not None and self.ground_truth_m.shape != inflow.shape:
            raise AlignmentError(
                f"真值长度 {self.ground_truth_m.shape} 与计数长度 {inflow.shape} 不一致"
            )

    @property
    def steps(self) -> int:
        return int(self.cum_inflow.size)

    @property
    def n_segments(self) -> int:
        return int(self.afcd_speeds.shape[0])

    @property
    def steps_per_afcd(self) -> int:
        return AFCD_STEP_S // self.step_s

    @property
    def net_accumulation(self) -> np.ndarray:
        """A_t − D_t"""
        return self.cum_inflow - self.cum_outflow

    @property
    def elapsed_s(self) -> np.ndarray:
        """距日窗口起点的秒数"""
        return np.arange(self.steps, dtype=float) * self.step_s

    def timestamps(self) -> List[datetime]:
        return [self.t0 + timedelta(seconds=self.step_s * k) for k in range(self.steps)]

    def afcd_timestamps(self) -> List[datetime]:
        return [self.t0 + timedelta(seconds=AFCD_STEP_S * k) for k in range(self.afcd_speeds.shape[1])]

    def truncated(self) -> "SensorDay":
        """截断到完整的 60 s 区间（尾部不足一个区间的部分丢弃）"""
        per = self.steps_per_afcd
        full = min(self.steps // per, self.afcd_speeds.shape[1])
        steps = full * per
        if steps == self.steps and full == self.afcd_speeds.shape[1]:
            return self
        truth = None if self.ground_truth_m is None else self.ground_truth_m[:steps]
        return SensorDay(
            t0=self.t0,
            cum_inflow=self.cum_inflow[:steps],
            cum_outflow=self.cum_outflow[:steps],
            afcd_speeds=self.afcd_speeds[:, :full],
            ground_truth_m=truth,
            step_s=self.step_s,
            label=self.label,
        )

    def with_truth(self, truth: Optional[Sequence[float]]) -> "SensorDay":
        return SensorDay(self.t0, self.cum_inflow, self.cum_outflow, self.afcd_speeds,
                         truth, self.step_s, self.label)


@dataclass(frozen=True)
class FilterTrace:
    """
    一次滤波运行的逐步记录

    gains：每步一组增益行；Q-Net 为 (G, 3)，Q-EKF 为 (1, N)
    """
    variant: str
    prior_m: np.ndarray
    posterior_m: np.ndarray
    predicted_speeds: np.ndarray
    gains: List[np.ndarray] = field(default_factory=list)
    control_u: Optional[np.ndarray] = None
    variances: Optional[np.ndarray] = None

    @property
    def steps(self) -> int:
        return int(self.posterior_m.size)

    def within_bounds(self, q_max: float) -> bool:
        values = np.concatenate([self.prior_m, self.posterior_m])
        return bool(np.all(values >= 0.0) and np.all(values <= q_max))
