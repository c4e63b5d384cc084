"""
Q-EKF：解析扩展卡尔曼滤波（F = 1，标量状态，N 维测量）与线性 KF 对照
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Protocol, Tuple

import numpy as np

from core.exceptions import ConfigError, NumericError
from core.timebase import clamp_queue
from .steps import StepRecord, predict

logger = logging.getLogger(__name__)

# 默认噪声：Q = (2 m)²，R = (1 m/s)²·I，Σ0 = (10 m)²
DEFAULT_PROCESS_VAR = 2.0 ** 2
DEFAULT_MEASUREMENT_VAR = 1.0 ** 2
DEFAULT_INITIAL_VAR = 10.0 ** 2


class Measurement(Protocol):
    """h(·) 及其导数；MeasurementModel 与 LinearMeasurement 都满足"""

    def expected_speeds(self, x: float) -> np.ndarray: ...

    def jacobian(self, x: float) -> np.ndarray: ...


@dataclass(frozen=True)
class EkfParams:
    """过程方差 Q（m²）、测量方差 R（(m/s)²，对角）、初始方差 Σ0（m²）"""
    process_var: float = DEFAULT_PROCESS_VAR
    measurement_var: float = DEFAULT_MEASUREMENT_VAR
    initial_var: float = DEFAULT_INITIAL_VAR

    def __post_init__(self) -> None:
        for name in ("process_var", "measurement_var", "initial_var"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(f"EkfParams.{name} 必须 > 0: {value}")

    def to_dict(self) -> Dict[str, float]:
        return {"process_var": self.process_var, "measurement_var": self.measurement_var,
                "initial_var": self.initial_var}

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "EkfParams":
        return cls(**{k: float(v) for k, v in (data or {}).items()})


@dataclass(frozen=True)
class LinearMeasurement:
    """线性测量 h(x) = a·x + b，用于与闭式线性 KF 对照"""
    slope: np.ndarray
    offset: np.ndarray

    def expected_speeds(self, x: float) -> np.ndarray:
        return np.asarray(self.slope, dtype=float) * x + np.asarray(self.offset, dtype=float)

    def jacobian(self, x: float) -> np.ndarray:
        return np.asarray(self.slope, dtype=float)


def predict_variance(sigma_post_prev: float, params: EkfParams) -> float:
    """Σ_{t|t−1} = Σ_{t−1|t−1} + Q"""
    return sigma_post_prev + params.process_var


def update_ekf(x_prior: float, sigma_prior: float, y_t: np.ndarray, y_pred: np.ndarray,
               params: EkfParams, q_max: float, measurement: Measurement) -> Tuple[float, float, np.ndarray]:
    """
    EKF 更新

    H = ∂h/∂x(x_prior)；S = H Σ Hᵀ + R；K = Σ Hᵀ S⁻¹；
    x_post = clamp(x_prior + K (y − ŷ))；Σ_post = Σ − K S Kᵀ

    Returns:
        (x_post, Σ_post, K)

    Raises:
        NumericError: S 奇异或结果非有限
    """
    if not sigma_prior > 0:
        raise NumericError(f"先验方差必须 > 0: {sigma_prior}", stage="ekf")
    y_t = np.asarray(y_t, dtype=float)
    h = np.asarray(measurement.jacobian(x_prior), dtype=float)
    s = sigma_prior * np.outer(h, h) + params.measurement_var * np.eye(h.size)
    try:
        gain = np.linalg.solve(s, h * sigma_prior)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"新息协方差 S 奇异: {exc}", stage="ekf") from exc
    innovation = y_t - np.asarray(y_pred, dtype=float)
    x_post = clamp_queue(x_prior + float(gain @ innovation), q_max)
    sigma_post = sigma_prior - float(gain @ s @ gain)
    if not (np.isfinite(x_post) and np.isfinite(sigma_post)):
        raise NumericError("EKF 更新产生非有限值", stage="ekf")
    return float(x_post), sigma_post, gain


class EkfStepper:
    """Q-EKF 的逐步递推：x̂_0 = 0，Σ = Σ0"""

    def __init__(self, measurement: Measurement, params: EkfParams, q_max: float):
        self.measurement = measurement
        self.params = params
        self.q_max = float(q_max)
        self.x_post = 0.0
        self.sigma_post = params.initial_var

    def step(self, u_t: float, y_t: np.ndarray):
        x_prior, y_pred = predict(self.x_post, u_t, self.q_max, self.measurement)
        sigma_prior = predict_variance(self.sigma_post, self.params)
        x_post, sigma_post, gain = update_ekf(x_prior, sigma_prior, y_t, y_pred,
                                              self.params, self.q_max, self.measurement)
        self.x_post, self.sigma_post = x_post, sigma_post
        return StepRecord(x_prior=x_prior, x_post=x_post, y_pred=y_pred,
                          gains=gain[np.newaxis, :], u=float(u_t), variance=sigma_post)


class LinearKalmanFilter:
    """
    闭式线性卡尔曼滤波（信息形式），标量状态 x_t = x_{t−1} + u_t + w_t，
    测量 y_t = a·x_t + b + v_t，v_t ~ N(0, R·I)。不截断。
    """

    def __init__(self, slope: np.ndarray, offset: np.ndarray, params: EkfParams):
        self.slope = np.asarray(slope, dtype=float)
        self.offset = np.asarray(offset, dtype=float)
        self.params = params

    def run(self, measurements: np.ndarray, control: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Args:
            measurements: (N, T)
            control: (T,)

        Returns:
            (后验均值 (T,), 后验方差 (T,))
        """
        measurements = np.asarray(measurements, dtype=float)
        steps = measurements.shape[1]
        a, b, r = self.slope, self.offset, self.params.measurement_var
        info_gain = float(a @ a) / r
        x, sigma = 0.0, self.params.initial_var
        means = np.zeros(steps)
        variances = np.zeros(steps)
        for t in range(steps):
            x_prior = x + control[t]
            sigma_prior = sigma + self.params.process_var
            sigma = 1.0 / (1.0 / sigma_prior + info_gain)
            x = x_prior + sigma * float(a @ (measurements[:, t] - a * x_prior - b)) / r
            means[t] = x
            variances[t] = sigma
        return means, variances
