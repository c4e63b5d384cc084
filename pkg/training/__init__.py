"""
增益网络的窗口化端到端训练
"""

from .config import EXPERIMENT_TIME_BUDGET_S, DataSplit, TrainConfig, split_days
from .trainer import (
    EpochRecord,
    TrainResult,
    evaluate_rmse,
    forward_window,
    train,
    window_gradient,
    write_loss_curve,
)
from .windows import Window, slice_windows, window_bounds, window_loss

__all__ = [
    "TrainConfig",
    "EXPERIMENT_TIME_BUDGET_S",
    "DataSplit",
    "split_days",
    "Window",
    "window_bounds",
    "slice_windows",
    "window_loss",
    "forward_window",
    "window_gradient",
    "evaluate_rmse",
    "EpochRecord",
    "TrainResult",
    "train",
    "write_loss_curve",
]
