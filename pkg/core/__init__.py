"""
排队长度估计核心模块

领域类型、10 s / 60 s 时间基对齐、测量模型、控制输入推导以及 CSV / JSON 读写。
"""

from .control import (
    DEFAULT_BAND,
    DEFAULT_BOUNDARY_WINDOW_STEPS,
    ControlSeries,
    OnlineControlDeriver,
    OnlineFlowRateEstimator,
    ReconstructionParams,
    affine_rescale,
    bandpass_filter,
    derive_control,
    estimate_lambda_offline,
    estimate_lambda_online,
    reconstruct_queue_raw,
)
from .exceptions import (
    AlignmentError,
    CheckpointError,
    ConfigError,
    FilterRunError,
    FlowRateEstimationError,
    GroupingError,
    MissingDataError,
    NumericError,
    OptimizerError,
    QueueNetDataError,
    QueueNetError,
    QueueNetNumericError,
    RegimeEstimationError,
    ScalingError,
    TrainingDivergedError,
)
from .measurement import (
    MeasurementModel,
    estimate_regimes,
    expected_speed,
    expected_speeds,
    jacobian_h,
)
from .models import (
    AFCD_STEP_S,
    BASE_STEP_S,
    DEFAULT_DAY_STEPS,
    KMH_PER_MPS,
    STEPS_PER_AFCD,
    FilterTrace,
    SectionGeometry,
    SensorDay,
    SpeedRegimes,
    day_steps,
)
from .timebase import clamp_queue, expand_afcd, impute_missing, subsample_afcd

__all__ = [
    # 模型
    "AFCD_STEP_S",
    "BASE_STEP_S",
    "DEFAULT_DAY_STEPS",
    "KMH_PER_MPS",
    "STEPS_PER_AFCD",
    "FilterTrace",
    "SectionGeometry",
    "SensorDay",
    "SpeedRegimes",
    "day_steps",
    # 时间基
    "clamp_queue",
    "expand_afcd",
    "impute_missing",
    "subsample_afcd",
    # 测量模型
    "MeasurementModel",
    "estimate_regimes",
    "expected_speed",
    "expected_speeds",
    "jacobian_h",
    # 控制输入
    "DEFAULT_BAND",
    "DEFAULT_BOUNDARY_WINDOW_STEPS",
    "ControlSeries",
    "OnlineControlDeriver",
    "OnlineFlowRateEstimator",
    "ReconstructionParams",
    "affine_rescale",
    "bandpass_filter",
    "derive_control",
    "estimate_lambda_offline",
    "estimate_lambda_online",
    "reconstruct_queue_raw",
    # 异常
    "QueueNetError",
    "QueueNetDataError",
    "QueueNetNumericError",
    "AlignmentError",
    "MissingDataError",
    "RegimeEstimationError",
    "GroupingError",
    "ConfigError",
    "CheckpointError",
    "ScalingError",
    "FlowRateEstimationError",
    "NumericError",
    "OptimizerError",
    "TrainingDivergedError",
    "FilterRunError",
]
