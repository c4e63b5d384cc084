"""
预测步与逐步记录
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from core.models import FilterTrace
from core.timebase import clamp_queue


@dataclass
class StepRecord:
    """一步滤波的输出"""
    x_prior: float
    x_post: float
    y_pred: np.ndarray
    gains: np.ndarray
    u: float
    variance: Optional[float] = None


def predict(x_post_prev: float, u_t: float, q_max: float, measurement) -> Tuple[float, np.ndarray]:
    """
    x_prior = clamp(x_post_prev + u_t, 0, q_max)；ŷ_prior = h(x_prior)

    Args:
        measurement: 提供 expected_speeds(x) 的测量模型
    """
    x_prior = float(clamp_queue(float(x_post_prev) + float(u_t), q_max))
    return x_prior, np.asarray(measurement.expected_speeds(x_prior), dtype=float)


@dataclass
class TraceRecorder:
    """累积 StepRecord，随时可导出（含出错前的部分）FilterTrace"""
    variant: str
    records: List[StepRecord] = field(default_factory=list)

    def append(self, record: StepRecord) -> StepRecord:
        self.records.append(record)
        return record

    def __len__(self) -> int:
        return len(self.records)

    def to_trace(self) -> FilterTrace:
        records = self.records
        n = records[0].y_pred.size if records else 0
        variances = None
        if records and records[0].variance is not None:
            variances = np.array([r.variance for r in records])
        return FilterTrace(
            variant=self.variant,
            prior_m=np.array([r.x_prior for r in records]),
            posterior_m=np.array([r.x_post for r in records]),
            predicted_speeds=np.array([r.y_pred for r in records]).reshape(len(records), n),
            gains=[r.gains for r in records],
            control_u=np.array([r.u for r in records]),
            variances=variances,
        )
