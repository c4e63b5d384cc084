"""
排队长度估计滤波器

Q-Net（学习型增益）、Q-Net 无控制输入、Q-EKF，以及线性卡尔曼滤波对照与流式估计器。
"""

from .ekf import (
    EkfParams,
    EkfStepper,
    LinearKalmanFilter,
    LinearMeasurement,
    predict_variance,
    update_ekf,
)
from .filter import (
    LEARNED_VARIANTS,
    VARIANTS,
    FilterCarry,
    LearnedUpdate,
    QNetRecursion,
    QNetStepper,
    make_stepper,
    update_learned,
)
from .runner import FilterInputs, prepare_offline_inputs, run_day, run_inputs
from .steps import StepRecord, TraceRecorder, predict
from .streaming import StreamingEstimator

__all__ = [
    "VARIANTS",
    "LEARNED_VARIANTS",
    "predict",
    "StepRecord",
    "TraceRecorder",
    "EkfParams",
    "EkfStepper",
    "LinearKalmanFilter",
    "LinearMeasurement",
    "predict_variance",
    "update_ekf",
    "FilterCarry",
    "LearnedUpdate",
    "QNetRecursion",
    "QNetStepper",
    "make_stepper",
    "update_learned",
    "FilterInputs",
    "prepare_offline_inputs",
    "run_inputs",
    "run_day",
    "StreamingEstimator",
]
