"""
仿真场景配置：路段、速度状态、需求曲线、信号配时、未观测流率与 aFCD 劣化参数
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from datetime import date, datetime
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from core.exceptions import ConfigError
from core.models import (
    BASE_STEP_S,
    DEFAULT_DAY_END,
    DEFAULT_DAY_START,
    SectionGeometry,
    SpeedRegimes,
    day_steps,
    parse_clock,
)

logger = logging.getLogger(__name__)

DEFAULT_JAM_SPACING_M = 7.5
DEFAULT_SATURATION_FLOW = 0.5  # veh/s/lane
SIGNAL_STATES = ("green", "red")


@dataclass(frozen=True)
class RateProfile:
    """
    分段线性速率曲线（veh/s），断点时刻为距日窗口起点的秒数

    断点之外保持端点值。
    """
    times_s: Tuple[float, ...] = (0.0,)
    rates: Tuple[float, ...] = (0.0,)

    def __post_init__(self) -> None:
        times = tuple(float(t) for t in self.times_s)
        rates = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "times_s", times)
        object.__setattr__(self, "rates", rates)
        if not times or len(times) != len(rates):
            raise ConfigError(f"速率曲线断点与取值数量不一致: {len(times)} vs {len(rates)}")
        if any(b < a for a, b in zip(times, times[1:])):
            raise ConfigError("速率曲线断点必须按时间递增")
        if any(r < 0 for r in rates):
            raise ConfigError(f"速率不能为负: {rates}")

    @classmethod
    def constant(cls, rate: float) -> "RateProfile":
        return cls((0.0,), (float(rate),))

    def rate(self, t_s: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return np.interp(t_s, self.times_s, self.rates)

    def cumulative(self, horizon_s: int) -> np.ndarray:
        """逐秒累积期望量 ∫₀ᵗ rate，长度 horizon_s + 1"""
        rates = self.rate(np.arange(horizon_s) + 0.5)
        return np.concatenate([[0.0], np.cumsum(rates)])

    def mean(self, horizon_s: int) -> float:
        return float(self.cumulative(horizon_s)[-1] / max(horizon_s, 1))

    def scaled(self, factor: float) -> "RateProfile":
        return RateProfile(self.times_s, tuple(r * factor for r in self.rates))

    def to_dict(self) -> Dict[str, Any]:
        return {"times_s": list(self.times_s), "rates": list(self.rates)}

    @classmethod
    def from_value(cls, value: Any) -> "RateProfile":
        """接受数字（常数）或 {"times_s": [...], "rates": [...]}；时刻也可写成 "HH:MM" 相对日起点"""
        if isinstance(value, (int, float)):
            return cls.constant(value)
        if isinstance(value, dict):
            return cls(tuple(value.get("times_s", (0.0,))), tuple(value.get("rates", (0.0,))))
        raise ConfigError(f"无法解析速率曲线: {value!r}")


def peak_demand(start: str = DEFAULT_DAY_START, base: float = 0.08, midday: float = 0.3,
                peak: float = 0.47) -> RateProfile:
    """早晚双高峰的默认需求曲线"""
    origin = parse_clock(start)
    points = [
        ("06:00", base), ("07:00", 0.3), ("08:00", peak), ("08:45", peak), ("09:30", 0.25),
        ("12:00", midday), ("15:30", midday), ("16:30", peak), ("17:30", peak),
        ("18:30", 0.2), ("19:30", 0.06), ("20:00", 0.06),
    ]
    times = [(parse_clock(clock) - origin).total_seconds() for clock, _ in points]
    return RateProfile(tuple(times), tuple(rate for _, rate in points))


@dataclass(frozen=True)
class SignalPlan:
    """
    定周期信号：每周期先绿后红

    fixed_state 为 "green" / "red" 时忽略配时（全绿 / 全红标定场景）。
    """
    cycle_s: float = 90.0
    green_ratio: float = 0.45
    offset_s: float = 0.0
    fixed_state: Optional[str] = None

    def __post_init__(self) -> None:
        if self.fixed_state is not None and self.fixed_state not in SIGNAL_STATES:
            raise ConfigError(f"未知的固定信号状态: {self.fixed_state}（可选 {SIGNAL_STATES}）")
        if self.fixed_state is None:
            if not self.cycle_s > 0:
                raise ConfigError(f"信号周期必须 > 0: {self.cycle_s}")
            if not 0 < self.green_ratio < 1:
                raise ConfigError(f"绿信比必须满足 0 < g < 1: {self.green_ratio}")

    def is_green(self, t_s: float) -> bool:
        if self.fixed_state is not None:
            return self.fixed_state == "green"
        phase = (t_s - self.offset_s) % self.cycle_s
        return phase < self.green_ratio * self.cycle_s

    def to_dict(self) -> Dict[str, Any]:
        return {"cycle_s": self.cycle_s, "green_ratio": self.green_ratio,
                "offset_s": self.offset_s, "fixed_state": self.fixed_state}

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "SignalPlan":
        return cls(**(data or {}))


def _default_geometry() -> SectionGeometry:
    return SectionGeometry.uniform("sim-5seg", 500.0, 2, 5, q_max_m=450.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """
    一个信号交叉口进口道的仿真场景

    - demand：到达率曲线（veh/s）
    - lambda_unobserved：未观测净离开率曲线（veh/s，≥ 0）
    - afcd_noise_sd / afcd_delay_s / missing_prob：aFCD 劣化
    - dead_segments：整天无 aFCD 的分段（传感器故障）
    - stochastic=False：到达与离开按累积期望量取整，用于守恒验证
    """
    geometry: SectionGeometry = field(default_factory=_default_geometry)
    regimes: SpeedRegimes = field(default_factory=lambda: SpeedRegimes(v_free=14.0, v_jam=2.0))
    demand: RateProfile = field(default_factory=peak_demand)
    signal: SignalPlan = field(default_factory=SignalPlan)
    lambda_unobserved: RateProfile = field(default_factory=lambda: RateProfile.constant(0.02))
    afcd_noise_sd: float = 1.0
    afcd_delay_s: float = 60.0
    missing_prob: float = 0.05
    dead_segments: Tuple[int, ...] = ()
    jam_spacing_m: float = DEFAULT_JAM_SPACING_M
    saturation_flow: float = DEFAULT_SATURATION_FLOW
    stochastic: bool = True
    seed: int = 0
    start: str = DEFAULT_DAY_START
    end: str = DEFAULT_DAY_END
    day: date = date(2024, 3, 4)
    weekend_factor: float = 0.7

    def __post_init__(self) -> None:
        object.__setattr__(self, "dead_segments", tuple(int(i) for i in self.dead_segments))
        if self.afcd_noise_sd < 0 or self.afcd_delay_s < 0:
            raise ConfigError(f"aFCD 噪声 / 延迟不能为负: {self.afcd_noise_sd}, {self.afcd_delay_s}")
        if not 0 <= self.missing_prob < 1:
            raise ConfigError(f"缺失概率必须在 [0, 1): {self.missing_prob}")
        if not self.jam_spacing_m > 0 or not self.saturation_flow > 0:
            raise ConfigError("拥堵车头间距与饱和流率必须 > 0")
        if any(not 0 <= i < self.geometry.n_segments for i in self.dead_segments):
            raise ConfigError(f"dead_segments 越界: {self.dead_segments}")
        if not 0 < self.weekend_factor:
            raise ConfigError(f"周末需求系数必须 > 0: {self.weekend_factor}")
        day_steps(self.start, self.end)

    @property
    def steps(self) -> int:
        return day_steps(self.start, self.end, BASE_STEP_S)

    @property
    def horizon_s(self) -> int:
        return self.steps * BASE_STEP_S

    @property
    def t0(self) -> datetime:
        return datetime.combine(self.day, datetime.min.time()) + parse_clock(self.start)

    @property
    def k_jam(self) -> float:
        return 1.0 / self.jam_spacing_m

    def effective_k_free(self) -> float:
        """非排队部分的单车道平均密度：(平均到达率 − 平均未观测离开率) / (v_free · m)"""
        net_rate = self.demand.mean(self.horizon_s) - self.lambda_unobserved.mean(self.horizon_s)
        return max(net_rate, 0.0) / (self.regimes.v_free * self.geometry.lanes)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "section": {**self.geometry.to_dict(), **self.regimes.to_dict()},
            "demand": self.demand.to_dict(),
            "signal": self.signal.to_dict(),
            "lambda_unobserved": self.lambda_unobserved.to_dict(),
            "afcd_noise_sd": self.afcd_noise_sd,
            "afcd_delay_s": self.afcd_delay_s,
            "missing_prob": self.missing_prob,
            "dead_segments": list(self.dead_segments),
            "jam_spacing_m": self.jam_spacing_m,
            "saturation_flow": self.saturation_flow,
            "stochastic": self.stochastic,
            "seed": self.seed,
            "start": self.start,
            "end": self.end,
            "day": self.day.isoformat(),
            "weekend_factor": self.weekend_factor,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScenarioConfig":
        """
        从 JSON 字典构造；section 缺省时使用默认 5 段路段，demand 缺省为双高峰曲线

        Raises:
            ConfigError: 字段取值无效
        """
        from core.io import section_from_dict

        kwargs: Dict[str, Any] = {}
        if "section" in data:
            geometry, regimes = section_from_dict(data["section"])
            kwargs["geometry"] = geometry
            if regimes is not None:
                kwargs["regimes"] = regimes
        if "demand" in data:
            kwargs["demand"] = RateProfile.from_value(data["demand"])
        if "signal" in data:
            kwargs["signal"] = SignalPlan.from_dict(data["signal"])
        if "lambda_unobserved" in data:
            kwargs["lambda_unobserved"] = RateProfile.from_value(data["lambda_unobserved"])
        for key in ("afcd_noise_sd", "afcd_delay_s", "missing_prob", "jam_spacing_m",
                    "saturation_flow", "weekend_factor"):
            if key in data:
                kwargs[key] = float(data[key])
        for key in ("stochastic",):
            if key in data:
                kwargs[key] = bool(data[key])
        for key in ("start", "end"):
            if key in data:
                kwargs[key] = str(data[key])
        if "seed" in data:
            kwargs["seed"] = int(data["seed"])
        if "dead_segments" in data:
            kwargs["dead_segments"] = tuple(data["dead_segments"])
        if "day" in data:
            try:
                kwargs["day"] = date.fromisoformat(str(data["day"]))
            except ValueError as exc:
                raise ConfigError(f"无效的日期: {data['day']!r}") from exc
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"场景配置无效: {exc}") from exc
