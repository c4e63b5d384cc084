"""
控制输入 u_t：由累积线圈计数推导的逐步排队变化

u_t = D(F(C(q_t)))：
- C：扣除未观测净流率 λ_c·t，再仿射缩放到 [0, Q_max]
- F：带通滤波，去掉低频漂移与高频噪声（离线为傅里叶带通，在线为因果 Butterworth）
- D：一阶时间差分
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.signal import butter, sosfilt, sosfilt_zi

from .exceptions import (
    ConfigError,
    FlowRateEstimationError,
    QueueNetDataError,
    ScalingError,
)
from .models import BASE_STEP_S, SectionGeometry, SensorDay

logger = logging.getLogger(__name__)

# 默认参数
DEFAULT_BOUNDARY_WINDOW_STEPS = 180  # 30 min
DEFAULT_BAND: Tuple[float, float] = (1.0 / (4 * 3600), 1.0 / (4 * 60))
DEFAULT_K_JAM = 1.0 / 7.5
DEFAULT_K_FREE = 0.02
MIN_BANDPASS_LENGTH = 16
# 在线模式因果 Butterworth 的阶数（带通时每个截止端各 2 阶）
CAUSAL_FILTER_ORDER = 2

CONTROL_MODES = ("offline", "online")


def nyquist_hz(step_s: float = BASE_STEP_S) -> float:
    return 0.5 / step_s


@dataclass(frozen=True)
class ReconstructionParams:
    """守恒重建参数：λ_c（veh/s）、k_jam / k_free（veh/m）、带通 (low_hz, high_hz)"""
    lambda_c: float = 0.0
    k_jam: float = DEFAULT_K_JAM
    k_free: float = DEFAULT_K_FREE
    bandpass: Tuple[float, float] = DEFAULT_BAND

    def __post_init__(self) -> None:
        if not self.k_jam > self.k_free > 0:
            raise ConfigError(f"密度必须满足 k_jam > k_free > 0: {self.k_jam}, {self.k_free}")
        validate_band(*self.bandpass)


def validate_band(low_hz: float, high_hz: float, step_s: float = BASE_STEP_S) -> None:
    if not 0 <= low_hz < high_hz <= nyquist_hz(step_s):
        raise ConfigError(
            f"带通截止频率必须满足 0 ≤ low < high ≤ {nyquist_hz(step_s)} Hz: ({low_hz}, {high_hz})"
        )


@dataclass(frozen=True)
class ControlSeries:
    """
    控制输入序列

    u：每 10 s 步的排队变化（m）；reconstructed_q：滤波后的重建排队 q̃（诊断用）；
    lambda_c：每步所用的 λ_c（离线模式为常数）。
    u 在任意区间上的和等于 q̃ 在该区间上的变化。
    """
    u: np.ndarray
    reconstructed_q: np.ndarray
    lambda_c: np.ndarray
    mode: str = "offline"

    @property
    def steps(self) -> int:
        return int(self.u.size)


def reconstruct_queue_raw(counts: SensorDay, params: ReconstructionParams,
                          geometry: SectionGeometry) -> np.ndarray:
    """q_t = (A_t − D_t − m·L·k_free − λ_c·t) / (m·(k_jam − k_free))，不做截断"""
    m = geometry.lanes
    numerator = (counts.net_accumulation - m * geometry.length_m * params.k_free
                 - params.lambda_c * counts.elapsed_s)
    return numerator / (m * (params.k_jam - params.k_free))


def _slope(t: np.ndarray, y: np.ndarray) -> float:
    tc = t - t.mean()
    denom = float(np.dot(tc, tc))
    if denom <= 0.0:
        raise FlowRateEstimationError("边界窗口内的样本时间全部相同，回归退化")
    return float(np.dot(tc, y - y.mean()) / denom)


def _boundary_support(steps: int, window: int) -> np.ndarray:
    if window < 1:
        raise ConfigError(f"边界窗口步数必须 ≥ 1: {window}")
    first = np.arange(min(window, steps))
    last = np.arange(max(steps - window, 0), steps)
    return np.union1d(first, last)


def estimate_lambda_offline(counts: SensorDay,
                            boundary_window_steps: int = DEFAULT_BOUNDARY_WINDOW_STEPS) -> float:
    """
    用日初、日末两个边界窗口（排队≈0）拟合 A−D 对时间的斜率，作为 λ_c

    Raises:
        FlowRateEstimationError: 所有边界样本处于同一时刻
    """
    idx = _boundary_support(counts.steps, boundary_window_steps)
    lam = _slope(counts.elapsed_s[idx], counts.net_accumulation[idx])
    logger.info("离线 λ_c 估计: %.5f veh/s（边界窗口 %d 步）", lam, boundary_window_steps)
    return lam


class OnlineFlowRateEstimator:
    """
    λ_c 的因果在线估计

    第 t 步对 [0, t] 的全部样本回归 A−D 对时间的斜率；不足一个窗口时输出 0。
    排队对称出现时末值接近离线估计，否则带有排队造成的偏差。
    """

    def __init__(self, boundary_window_steps: int = DEFAULT_BOUNDARY_WINDOW_STEPS):
        if boundary_window_steps < 2:
            raise ConfigError(f"在线估计的窗口步数必须 ≥ 2: {boundary_window_steps}")
        self.window = boundary_window_steps
        # 累积和：[n, Σt, Σy, Σtt, Σty]
        self._sums = np.zeros(5)

    @property
    def samples(self) -> int:
        return int(self._sums[0])

    def push(self, t_s: float, net: float) -> float:
        self._sums += (1.0, t_s, net, t_s * t_s, t_s * net)
        if self.samples < self.window:
            return 0.0
        count, st, sy, stt, sty = self._sums
        denom = count * stt - st * st
        if denom <= 0.0:
            return 0.0
        return float((count * sty - st * sy) / denom)


def estimate_lambda_online(counts: SensorDay,
                           boundary_window_steps: int = DEFAULT_BOUNDARY_WINDOW_STEPS) -> np.ndarray:
    """逐步的因果 λ_c 序列；第 t 步只使用 [0, t] 的样本"""
    estimator = OnlineFlowRateEstimator(boundary_window_steps)
    net = counts.net_accumulation
    elapsed = counts.elapsed_s
    return np.array([estimator.push(elapsed[k], net[k]) for k in range(counts.steps)])


def affine_rescale(signal: np.ndarray, q_max: float) -> np.ndarray:
    """平移缩放使最小值映射到 0、最大值映射到 q_max"""
    values = np.asarray(signal, dtype=float)
    lo = float(values.min())
    hi = float(values.max())
    if hi - lo <= 0.0:
        raise ScalingError("信号为常数，无法仿射缩放到排队长度范围")
    return (values - lo) / (hi - lo) * q_max


def bandpass_filter(signal: np.ndarray, low_hz: float, high_hz: float,
                    step_s: float = BASE_STEP_S) -> np.ndarray:
    """
    傅里叶带通：把 |f| < low_hz 或 |f| > high_hz 的频点置零后逆变换

    low_hz > 0 时直流分量一并去除，输出均值为 0。
    """
    values = np.asarray(signal, dtype=float)
    if values.size < MIN_BANDPASS_LENGTH:
        raise QueueNetDataError(
            f"带通滤波至少需要 {MIN_BANDPASS_LENGTH} 个样本: {values.size}"
        )
    spectrum = np.fft.rfft(values)
    freqs = np.fft.rfftfreq(values.size, d=step_s)
    spectrum[(freqs < low_hz) | (freqs > high_hz)] = 0.0
    return np.fft.irfft(spectrum, n=values.size)


def _temporal_difference(q: np.ndarray) -> np.ndarray:
    u = np.zeros_like(q)
    u[1:] = np.diff(q)
    return u


def causal_bandpass_sos(low_hz: float, high_hz: float,
                        step_s: float = BASE_STEP_S) -> Optional[np.ndarray]:
    """
    与 bandpass_filter 通带相同的因果 Butterworth 滤波器（二阶节形式）

    low_hz = 0 时退化为低通，high_hz 等于 Nyquist 时退化为高通；
    两端都不截止时返回 None（直通）。
    """
    validate_band(low_hz, high_hz, step_s=step_s)
    fs = 1.0 / step_s
    has_low = low_hz > 0.0
    has_high = high_hz < nyquist_hz(step_s)
    if has_low and has_high:
        return butter(CAUSAL_FILTER_ORDER, [low_hz, high_hz], btype="bandpass", fs=fs, output="sos")
    if has_low:
        return butter(CAUSAL_FILTER_ORDER, low_hz, btype="highpass", fs=fs, output="sos")
    if has_high:
        return butter(CAUSAL_FILTER_ORDER, high_hz, btype="lowpass", fs=fs, output="sos")
    return None


class _StreamingSos:
    """逐样本推进的 sosfilt；首个样本按常数输入的稳态初始化"""

    def __init__(self, sos: Optional[np.ndarray]):
        self.sos = sos
        self._zi: Optional[np.ndarray] = None

    def push(self, value: float) -> float:
        if self.sos is None:
            return float(value)
        if self._zi is None:
            self._zi = sosfilt_zi(self.sos) * value
        out, self._zi = sosfilt(self.sos, [value], zi=self._zi)
        return float(out[0])


class OnlineControlDeriver:
    """
    逐步因果的控制输入推导（在线 / 实时模式）

    带通由保存状态的因果 Butterworth 完成，分别作用于 A−D 和时间轴 t。
    滤波是线性的，所以 F(A−D − λ·t) = F(A−D) − λ·F(t)：λ_c(t) 更新后
    不必重新滤波历史。第 t 步用当前 λ_c(t) 和当前历史极值对相邻两步的
    滤波输出求差：

        u_t = Q_max / span_t · [ΔF(A−D)_t − λ_c(t)·ΔF(t)_t]

    reconstructed_q 为 u 的累加（q̃_0 = 0）。
    """

    def __init__(self, q_max: float, bandpass: Tuple[float, float] = DEFAULT_BAND,
                 boundary_window_steps: int = DEFAULT_BOUNDARY_WINDOW_STEPS,
                 step_s: float = BASE_STEP_S):
        sos = causal_bandpass_sos(*bandpass, step_s=step_s)
        self.q_max = float(q_max)
        self.bandpass = bandpass
        self.step_s = step_s
        self.flow_rate = OnlineFlowRateEstimator(boundary_window_steps)
        self._net_filter = _StreamingSos(sos)
        self._time_filter = _StreamingSos(sos)
        self._elapsed: List[float] = []
        self._net: List[float] = []
        self._filtered_prev: Optional[Tuple[float, float]] = None
        self._q = 0.0
        self.lambda_history: List[float] = []
        self.q_history: List[float] = []

    def _span(self, lam: float) -> float:
        corrected = np.asarray(self._net) - lam * np.asarray(self._elapsed)
        return float(corrected.max() - corrected.min())

    def push(self, cum_inflow: float, cum_outflow: float) -> float:
        t_s = len(self._net) * self.step_s
        net = float(cum_inflow) - float(cum_outflow)
        self._elapsed.append(t_s)
        self._net.append(net)
        lam = self.flow_rate.push(t_s, net)
        filtered = (self._net_filter.push(net), self._time_filter.push(t_s))

        u = 0.0
        if self._filtered_prev is not None:
            span = self._span(lam)
            if span > 0.0:
                d_net = filtered[0] - self._filtered_prev[0]
                d_time = filtered[1] - self._filtered_prev[1]
                u = (d_net - lam * d_time) / span * self.q_max
        self._filtered_prev = filtered

        self._q += u
        self.lambda_history.append(lam)
        self.q_history.append(self._q)
        return u


def derive_control(
    counts: SensorDay,
    geometry: SectionGeometry,
    mode: str = "offline",
    bandpass: Tuple[float, float] = DEFAULT_BAND,
    boundary_window_steps: int = DEFAULT_BOUNDARY_WINDOW_STEPS,
    lambda_c: Optional[float] = None,
) -> ControlSeries:
    """
    组合 C → F → D 推导控制输入

    Args:
        counts: 当天计数
        geometry: 路段几何（取 Q_max）
        mode: "offline"（全天回归 λ_c、全天极值）或 "online"（逐步因果）
        bandpass: (low_hz, high_hz)
        boundary_window_steps: λ_c 回归的边界窗口
        lambda_c: 离线模式下可直接给定 λ_c，跳过回归

    Returns:
        ControlSeries，u_0 = 0
    """
    if mode not in CONTROL_MODES:
        raise ConfigError(f"未知的控制输入模式: {mode}（可选 {CONTROL_MODES}）")
    validate_band(*bandpass, step_s=counts.step_s)
    logger.info("控制输入: mode=%s, 带通=(%.3g Hz, %.3g Hz)", mode, bandpass[0], bandpass[1])

    if mode == "online":
        deriver = OnlineControlDeriver(geometry.q_max_m, bandpass, boundary_window_steps, counts.step_s)
        u = np.array([deriver.push(a, d) for a, d in zip(counts.cum_inflow, counts.cum_outflow)])
        return ControlSeries(u=u, reconstructed_q=np.asarray(deriver.q_history),
                             lambda_c=np.asarray(deriver.lambda_history), mode=mode)

    lam = estimate_lambda_offline(counts, boundary_window_steps) if lambda_c is None else float(lambda_c)
    corrected = counts.net_accumulation - lam * counts.elapsed_s
    try:
        scaled = affine_rescale(corrected, geometry.q_max_m)
    except ScalingError:
        logger.warning("修正后的净累积为常数，控制输入退化为全零")
        zeros = np.zeros(counts.steps)
        return ControlSeries(u=zeros, reconstructed_q=zeros.copy(),
                             lambda_c=np.full(counts.steps, lam), mode=mode)
    q_tilde = bandpass_filter(scaled, *bandpass, step_s=counts.step_s)
    u = _temporal_difference(q_tilde)
    return ControlSeries(u=u, reconstructed_q=q_tilde, lambda_c=np.full(counts.steps, lam), mode=mode)
