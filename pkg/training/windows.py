"""
窗口切分、窗口初始状态与 RMSE 损失
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from core.exceptions import QueueNetDataError
from estimator import FilterCarry, FilterInputs, QNetRecursion
from neural import Node, Tape, ops


@dataclass
class Window:
    """一个训练窗口：[start, stop) 与进入窗口时的递推状态（不带梯度）"""
    index: int
    start: int
    stop: int
    carry: FilterCarry

    @property
    def steps(self) -> int:
        return self.stop - self.start


def window_bounds(steps: int, window_steps: int) -> List[Tuple[int, int]]:
    """整窗切分，尾部不足一窗的部分丢弃"""
    if window_steps < 1:
        raise QueueNetDataError(f"窗口步数必须 ≥ 1: {window_steps}")
    if steps < window_steps:
        raise QueueNetDataError(f"当天 {steps} 步不足一个窗口（{window_steps} 步）")
    return [(k * window_steps, (k + 1) * window_steps) for k in range(steps // window_steps)]


def slice_windows(inputs: FilterInputs, recursion: QNetRecursion, window_steps: int) -> List[Window]:
    """
    用当前参数做一次不记录梯度的推理前向，记下每个窗口起点的状态

    窗口 0 从 x̂ = 0、全零隐状态开始；窗口 k 从窗口 k−1 末步的后验（及隐状态）开始。
    前向固定开启截断，与推理语义一致。
    """
    bounds = window_bounds(inputs.steps, window_steps)
    tape = Tape(recursion.net.store, record=False)
    inference = QNetRecursion(recursion.net, recursion.model, clamp=True)
    carry = inference.initial_carry(tape)
    windows: List[Window] = []
    for index, (start, stop) in enumerate(bounds):
        windows.append(Window(index, start, stop, carry))
        for k in range(start, stop):
            carry = inference.step(carry, inputs.u[k], inputs.speeds[:, k], tape).carry
    return windows


def window_loss(estimates: Union[Node, Sequence[float], np.ndarray],
                truth: Sequence[float]) -> Union[Node, float]:
    """
    sqrt(mean((x_t − x̂_{t|t})²))

    estimates 为 Node 时返回可反向传播的 Node，否则返回 float。

    Raises:
        QueueNetDataError: 空窗口或长度不一致
    """
    truth = np.asarray(truth, dtype=float)
    values = estimates.value if isinstance(estimates, Node) else np.asarray(estimates, dtype=float)
    if truth.size == 0:
        raise QueueNetDataError("窗口为空，无法计算损失")
    if values.shape != truth.shape:
        raise QueueNetDataError(f"估计长度 {values.shape} 与真值长度 {truth.shape} 不一致")
    if isinstance(estimates, Node):
        return ops.sqrt(ops.mean(ops.square(ops.sub(estimates, truth))))
    return float(np.sqrt(np.mean((values - truth) ** 2)))
