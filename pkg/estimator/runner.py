"""
整日滤波运行
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core.control import (
    CONTROL_MODES,
    DEFAULT_BAND,
    DEFAULT_BOUNDARY_WINDOW_STEPS,
    ControlSeries,
    derive_control,
)
from core.exceptions import ConfigError, FilterRunError, QueueNetNumericError
from core.measurement import MeasurementModel
from core.models import FilterTrace, SectionGeometry, SensorDay, SpeedRegimes
from core.timebase import expand_afcd, impute_missing
from gainnet import GainNet
from .ekf import EkfParams
from .filter import make_stepper
from .steps import TraceRecorder
from .streaming import StreamingEstimator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterInputs:
    """对齐到 10 s 网格的滤波输入：speeds (N, T)，u (T,)"""
    speeds: np.ndarray
    u: np.ndarray

    @property
    def steps(self) -> int:
        return int(self.u.size)


def prepare_offline_inputs(
    day: SensorDay,
    geometry: SectionGeometry,
    variant: str = "qnet",
    control: Optional[ControlSeries] = None,
    bandpass: Tuple[float, float] = DEFAULT_BAND,
    boundary_window_steps: int = DEFAULT_BOUNDARY_WINDOW_STEPS,
) -> FilterInputs:
    """
    离线模式的输入：aFCD 前向填充（前导缺失回填）后展开到 10 s；
    控制输入用全天离线推导，qnet_no_u 强制为 0
    """
    if day.n_segments != geometry.n_segments:
        raise ConfigError(f"aFCD 分段数 {day.n_segments} 与路段配置 {geometry.n_segments} 不一致")
    speeds = expand_afcd(impute_missing(day.afcd_speeds), day.steps, day.steps_per_afcd)
    if variant == "qnet_no_u":
        u = np.zeros(day.steps)
    else:
        control = control or derive_control(day, geometry, "offline", bandpass, boundary_window_steps)
        if control.steps != day.steps:
            raise ConfigError(f"控制输入长度 {control.steps} 与当天步数 {day.steps} 不一致")
        u = np.asarray(control.u, dtype=float)
    return FilterInputs(speeds=speeds, u=u)


def run_inputs(inputs: FilterInputs, model: MeasurementModel, variant: str,
               gain_net: Optional[GainNet] = None, ekf_params: Optional[EkfParams] = None) -> FilterTrace:
    """
    在准备好的输入上逐步运行

    Raises:
        FilterRunError: 数值失败；trace 为出错步之前的部分记录
    """
    stepper = make_stepper(variant, model, gain_net, ekf_params)
    recorder = TraceRecorder(variant)
    for k in range(inputs.steps):
        try:
            recorder.append(stepper.step(inputs.u[k], inputs.speeds[:, k]))
        except QueueNetNumericError as exc:
            raise FilterRunError(f"{variant} 在第 {k} 步失败: {exc}", trace=recorder.to_trace(), step=k) from exc
    return recorder.to_trace()


def _run_online(day: SensorDay, geometry: SectionGeometry, regimes: SpeedRegimes, variant: str,
                gain_net: Optional[GainNet], ekf_params: Optional[EkfParams],
                bandpass: Tuple[float, float], boundary_window_steps: int) -> FilterTrace:
    estimator = StreamingEstimator(geometry, regimes, variant, gain_net, ekf_params,
                                   bandpass, boundary_window_steps, day.step_s)
    per = day.steps_per_afcd
    for k in range(day.steps):
        afcd = day.afcd_speeds[:, k // per] if k % per == 0 else None
        try:
            estimator.push(day.cum_inflow[k], day.cum_outflow[k], afcd)
        except QueueNetNumericError as exc:
            raise FilterRunError(f"{variant} 在第 {k} 步失败: {exc}", trace=estimator.trace(), step=k) from exc
    return estimator.trace()


def run_day(
    day: SensorDay,
    geometry: SectionGeometry,
    regimes: SpeedRegimes,
    variant: str = "qnet",
    gain_net: Optional[GainNet] = None,
    ekf_params: Optional[EkfParams] = None,
    control: Optional[ControlSeries] = None,
    mode: str = "offline",
    bandpass: Tuple[float, float] = DEFAULT_BAND,
    boundary_window_steps: int = DEFAULT_BOUNDARY_WINDOW_STEPS,
) -> FilterTrace:
    """
    运行一整天的预测 / 更新递推

    Args:
        day: 当天传感器数据
        variant: qnet / qnet_no_u / qekf
        gain_net: 学习型变体所需的增益网络
        ekf_params: Q-EKF 噪声参数（缺省为默认值）
        control: 预先推导的控制输入（仅离线模式）
        mode: offline（非因果填补与全天控制输入）或 online（逐步因果，与 realtime 相同）

    Returns:
        FilterTrace，x̂_0 = 0

    Raises:
        FilterRunError: 中途数值失败
    """
    if mode not in CONTROL_MODES:
        raise ConfigError(f"未知的运行模式: {mode}（可选 {CONTROL_MODES}）")
    model = MeasurementModel(geometry, regimes)
    if mode == "online":
        trace = _run_online(day, geometry, regimes, variant, gain_net, ekf_params,
                            bandpass, boundary_window_steps)
    else:
        inputs = prepare_offline_inputs(day, geometry, variant, control, bandpass, boundary_window_steps)
        trace = run_inputs(inputs, model, variant, gain_net, ekf_params)
    logger.info("滤波完成: %s %s，%d 步，日末后验 %.1f m", variant, mode, trace.steps,
                trace.posterior_m[-1] if trace.steps else 0.0)
    return trace
