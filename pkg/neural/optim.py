"""
Adam 优化器与梯度裁剪
"""
from __future__ import annotations

import logging
from typing import Tuple

import numpy as np

from .exceptions import DimensionError, OptimizerError
from .store import ParameterStore

logger = logging.getLogger(__name__)

DEFAULT_LR = 1e-3
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPS = 1e-8


def _check_gradients(store: ParameterStore, grads: np.ndarray) -> np.ndarray:
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != store.values.shape:
        raise DimensionError(f"梯度长度 {grads.shape} 与参数长度 {store.values.shape} 不一致")
    bad = ~np.isfinite(grads)
    if bad.any():
        names = sorted({store.slice_of(int(i)) for i in np.flatnonzero(bad)})
        raise OptimizerError(f"梯度含非有限值: {names}", bad_slices=names)
    return grads


def adam_step(store: ParameterStore, grads: np.ndarray, lr: float = DEFAULT_LR,
              beta1: float = DEFAULT_BETA1, beta2: float = DEFAULT_BETA2,
              eps: float = DEFAULT_EPS) -> ParameterStore:
    """
    带偏差校正的 Adam 单步（原地更新 store）

    Raises:
        DimensionError: 梯度长度不符
        OptimizerError: 梯度含 NaN / Inf，bad_slices 列出出问题的参数块
    """
    g = _check_gradients(store, grads)
    store.step += 1
    store.m[:] = beta1 * store.m + (1.0 - beta1) * g
    store.v[:] = beta2 * store.v + (1.0 - beta2) * g * g
    m_hat = store.m / (1.0 - beta1 ** store.step)
    v_hat = store.v / (1.0 - beta2 ** store.step)
    store.values -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return store


def clip_by_global_norm(grads: np.ndarray, max_norm: float) -> Tuple[np.ndarray, float]:
    """全局范数裁剪；返回 (裁剪后的梯度, 裁剪前的范数)"""
    norm = float(np.linalg.norm(grads))
    if max_norm > 0 and norm > max_norm:
        return grads * (max_norm / norm), norm
    return grads, norm
