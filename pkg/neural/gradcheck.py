"""
有限差分梯度检查
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .store import ParameterStore
from .tape import Node, Tape

logger = logging.getLogger(__name__)

LossFn = Callable[[Tape], Node]

DEFAULT_FD_STEP = 1e-5
# 解析梯度与数值梯度都极小时，按绝对误差判定
ABS_FLOOR = 1e-7


@dataclass
class GradCheckReport:
    indices: np.ndarray
    analytic: np.ndarray
    numeric: np.ndarray
    max_rel_error: float

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ABS_FLOOR) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def _scalar(node: Node) -> float:
    return float(np.sum(node.value))


def numeric_gradient(loss_fn: LossFn, store: ParameterStore, indices: Sequence[int],
                     step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """中心差分；每次扰动后用不记录的 Tape 重新前向"""
    result = np.zeros(len(indices))
    for k, i in enumerate(indices):
        original = store.values[i]
        store.values[i] = original + step
        plus = _scalar(loss_fn(Tape(store, record=False)))
        store.values[i] = original - step
        minus = _scalar(loss_fn(Tape(store, record=False)))
        store.values[i] = original
        result[k] = (plus - minus) / (2.0 * step)
    return result


def check_gradients(loss_fn: LossFn, store: ParameterStore, n_params: int = 50,
                    step: float = DEFAULT_FD_STEP, rng: Optional[np.random.Generator] = None,
                    indices: Optional[Sequence[int]] = None) -> GradCheckReport:
    """
    在随机挑选的参数上比较解析梯度与中心差分

    loss_fn 的输出若不是标量，按元素求和作为损失（即全 1 种子）。
    """
    rng = rng or np.random.default_rng(0)
    if indices is None:
        count = min(n_params, store.size)
        indices = rng.choice(store.size, size=count, replace=False)
    indices = np.asarray(indices, dtype=int)

    tape = Tape(store)
    out = loss_fn(tape)
    analytic = tape.backward(out)[indices]
    numeric = numeric_gradient(loss_fn, store, indices, step)
    err = relative_error(analytic, numeric)
    report = GradCheckReport(indices, analytic, numeric, float(err.max()) if err.size else 0.0)
    logger.debug("梯度检查: %d 个参数, 最大相对误差 %.3e", indices.size, report.max_rel_error)
    return report
