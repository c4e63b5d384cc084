"""
信号交叉口点排队仿真与传感器仿真，提供训练数据与端到端验证用的真值
"""

from .intersection import EventLog, SimOutput, simulate_day, simulate_days
from .scenario import (
    DEFAULT_JAM_SPACING_M,
    DEFAULT_SATURATION_FLOW,
    RateProfile,
    ScenarioConfig,
    SignalPlan,
    peak_demand,
)
from .sensors import delay_series, emit_afcd, emit_counts, interval_means

__all__ = [
    "RateProfile",
    "SignalPlan",
    "ScenarioConfig",
    "peak_demand",
    "DEFAULT_JAM_SPACING_M",
    "DEFAULT_SATURATION_FLOW",
    "EventLog",
    "SimOutput",
    "simulate_day",
    "simulate_days",
    "emit_counts",
    "emit_afcd",
    "interval_means",
    "delay_series",
]
