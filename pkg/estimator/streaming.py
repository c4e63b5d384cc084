"""
流式估计器：逐条接收计数与 aFCD，每 10 s 输出一个后验

完全因果：控制输入用在线 λ_c 与运行极值推导；aFCD 缺失用同段上一个有效值填补，
日初前导缺失用 v_free。批量在线模式与 realtime 命令共用本类，因此两者逐位相同。
"""
from __future__ import annotations

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from core.control import DEFAULT_BAND, DEFAULT_BOUNDARY_WINDOW_STEPS, OnlineControlDeriver
from core.exceptions import AlignmentError
from core.measurement import MeasurementModel
from core.models import BASE_STEP_S, SectionGeometry, SpeedRegimes
from gainnet import GainNet
from .ekf import EkfParams
from .filter import make_stepper
from .steps import StepRecord, TraceRecorder

logger = logging.getLogger(__name__)


class StreamingEstimator:
    """
    Args:
        geometry / regimes: 路段与速度状态
        variant: qnet / qnet_no_u / qekf
        gain_net: 学习型变体的增益网络
        ekf_params: Q-EKF 噪声参数
        bandpass: 在线控制输入的带通
    """

    def __init__(
        self,
        geometry: SectionGeometry,
        regimes: SpeedRegimes,
        variant: str = "qnet",
        gain_net: Optional[GainNet] = None,
        ekf_params: Optional[EkfParams] = None,
        bandpass: Tuple[float, float] = DEFAULT_BAND,
        boundary_window_steps: int = DEFAULT_BOUNDARY_WINDOW_STEPS,
        step_s: int = BASE_STEP_S,
    ):
        self.variant = variant
        self.model = MeasurementModel(geometry, regimes)
        self.stepper = make_stepper(variant, self.model, gain_net, ekf_params)
        self.control = OnlineControlDeriver(geometry.q_max_m, bandpass, boundary_window_steps, step_s)
        self.recorder = TraceRecorder(variant)
        self._speeds = np.full(geometry.n_segments, regimes.v_free)
        self._cum_prev: Optional[Tuple[float, float]] = None

    @property
    def steps(self) -> int:
        return len(self.recorder)

    @property
    def current_speeds(self) -> np.ndarray:
        """当前使用的（已填补）分段速度"""
        return self._speeds.copy()

    def _absorb_afcd(self, afcd: Sequence[float]) -> None:
        values = np.asarray(afcd, dtype=float)
        if values.shape != self._speeds.shape:
            raise AlignmentError(f"aFCD 向量长度 {values.shape} 与分段数 {self._speeds.shape} 不一致")
        present = ~np.isnan(values)
        self._speeds = np.where(present, values, self._speeds)

    def push(self, cum_inflow: float, cum_outflow: float,
             afcd: Optional[Sequence[float]] = None) -> StepRecord:
        """
        处理一个 10 s 步

        Args:
            cum_inflow / cum_outflow: 当前累积计数
            afcd: 新到达的 60 s 分段速度（NaN 为缺失）；None 表示沿用上一个区间

        Raises:
            QueueNetDataError: 累积计数递减或 aFCD 维度不符
        """
        if self._cum_prev is not None and (cum_inflow < self._cum_prev[0] or cum_outflow < self._cum_prev[1]):
            raise AlignmentError(f"第 {self.steps} 步累积计数递减: {self._cum_prev} → {(cum_inflow, cum_outflow)}")
        self._cum_prev = (float(cum_inflow), float(cum_outflow))
        if afcd is not None:
            self._absorb_afcd(afcd)

        u = self.control.push(cum_inflow, cum_outflow)
        if self.variant == "qnet_no_u":
            u = 0.0
        return self.recorder.append(self.stepper.step(u, self._speeds.copy()))

    def trace(self):
        return self.recorder.to_trace()
