"""
Q-Net 递推：预测 → 分组学习增益 → 更新

同一份递推代码服务两种场景：
- 推理：Tape(record=False)，先验与后验都截断到 [0, q_max]
- 训练：Tape(record=True)，可关闭截断，梯度穿过 h(·) 与整个窗口
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from core.exceptions import ConfigError, NumericError
from core.measurement import MeasurementModel
from gainnet import FeatureScale, GainNet, GainNetState, group_indices
from neural import Node, Tape, ops
from .ekf import EkfParams, EkfStepper
from .steps import StepRecord

logger = logging.getLogger(__name__)

VARIANTS = ("qnet", "qnet_no_u", "qekf")
LEARNED_VARIANTS = ("qnet", "qnet_no_u")


@dataclass
class FilterCarry:
    """
    跨步（及跨训练窗口）延续的递推状态

    d_evol = x̂_{t|t} − x̂_{t−1|t−1}，d_update = x̂_{t|t} − x̂_{t|t−1}，
    下一步作为 t−1 时刻的特征输入；y_prev 为上一步测量（日初为 None）。
    """
    x_post: Node
    d_evol: Node
    d_update: Node
    y_prev: Optional[np.ndarray]
    gain_state: GainNetState

    @property
    def x_value(self) -> float:
        return float(self.x_post.value)

    @classmethod
    def initial(cls, net: GainNet, n_groups: int, tape: Tape, x0: float = 0.0) -> "FilterCarry":
        """日初：x̂_0 = x0（默认 0），差分特征与隐状态全零"""
        return cls(
            x_post=tape.constant(np.float64(x0)),
            d_evol=tape.constant(np.float64(0.0)),
            d_update=tape.constant(np.float64(0.0)),
            y_prev=None,
            gain_state=net.initial_state(n_groups, tape),
        )

    def detach(self, tape: Tape) -> "FilterCarry":
        """保留数值、切断梯度（窗口边界处的截断 BPTT）"""
        return FilterCarry(
            x_post=tape.constant(self.x_post.value.copy()),
            d_evol=tape.constant(self.d_evol.value.copy()),
            d_update=tape.constant(self.d_update.value.copy()),
            y_prev=None if self.y_prev is None else self.y_prev.copy(),
            gain_state=self.gain_state.detach(tape),
        )


@dataclass
class LearnedUpdate:
    """一次学习型更新的结果"""
    x_post: Node
    x_raw: Node
    gains: Node
    innovations: Node
    state: GainNetState


def update_learned(
    x_prior: Union[Node, float],
    y_t: np.ndarray,
    y_pred: Union[Node, np.ndarray],
    gain_state: GainNetState,
    net: GainNet,
    q_max: float,
    scale: FeatureScale,
    y_prev: Optional[np.ndarray] = None,
    d_evol: Union[Node, float] = 0.0,
    d_update: Union[Node, float] = 0.0,
    tape: Optional[Tape] = None,
    clamp: bool = True,
) -> LearnedUpdate:
    """
    学习型更新：分组 → 增益网络 → Σ_i Kⁱ·Δȳⁱ → 截断

    Args:
        x_prior: 先验排队长度（m）
        y_t: 当前测量 (N,)
        y_pred: 先验预测测量 ŷ_{t|t−1} (N,)
        gain_state: 增益网络隐状态
        y_prev: 上一步测量；None 时 Δỹ 取 0（日初）
        d_evol, d_update: t−1 时刻的前向演化差 / 前向更新差
        clamp: 推理时为 True；训练时可关闭

    Raises:
        GroupingError: 分段数 < 3
        NumericError: 增益网络或更新结果出现非有限值
    """
    tape = tape or Tape(net.store, record=False)
    y_t = np.asarray(y_t, dtype=float)
    idx = group_indices(y_t.size)
    d_meas = np.zeros_like(y_t) if y_prev is None else y_t - np.asarray(y_prev, dtype=float)

    innovations = ops.sub(tape.lift(y_t), tape.lift(y_pred))
    innov_groups = ops.take(innovations, idx)
    gains, state = net.forward(d_meas[idx], innov_groups, d_evol, d_update, gain_state, tape, scale)

    x_raw = ops.add(tape.lift(x_prior), ops.reduce_sum(ops.rowwise_dot(gains, innov_groups)))
    if not np.isfinite(x_raw.value):
        raise NumericError("学习型更新产生非有限的后验", stage="update")
    x_post = ops.clip(x_raw, 0.0, q_max) if clamp else x_raw
    return LearnedUpdate(x_post=x_post, x_raw=x_raw, gains=gains, innovations=innovations, state=state)


@dataclass
class RecursionStep:
    x_prior: Node
    x_post: Node
    y_pred: np.ndarray
    gains: Node
    carry: FilterCarry


class QNetRecursion:
    """
    一步 Q-Net 递推（Node 形式）

    Args:
        net: 增益网络
        model: 测量模型 h(·)
        clamp: 是否在预测与更新后截断到 [0, q_max]
    """

    def __init__(self, net: GainNet, model: MeasurementModel, clamp: bool = True):
        self.net = net
        self.model = model
        self.q_max = model.geometry.q_max_m
        self.scale = FeatureScale(self.q_max, model.regimes.v_free)
        self.clamp = clamp
        self.n_groups = int(group_indices(model.n_segments).shape[0])

    def initial_carry(self, tape: Tape, x0: float = 0.0) -> FilterCarry:
        return FilterCarry.initial(self.net, self.n_groups, tape, x0)

    def _measure(self, x: Node) -> Node:
        """ŷ = h(x)，反向传播使用解析导数"""
        xv = float(x.value)
        jac = self.model.jacobian(xv)
        return ops.custom(self.model.expected_speeds(xv), (x,), lambda g: (float(g @ jac),))

    def step(self, carry: FilterCarry, u_t: float, y_t: np.ndarray, tape: Tape) -> RecursionStep:
        x_prior = ops.add(carry.x_post, float(u_t))
        if self.clamp:
            x_prior = ops.clip(x_prior, 0.0, self.q_max)
        y_pred = self._measure(x_prior)

        result = update_learned(
            x_prior, y_t, y_pred, carry.gain_state, self.net, self.q_max, self.scale,
            y_prev=carry.y_prev, d_evol=carry.d_evol, d_update=carry.d_update,
            tape=tape, clamp=self.clamp,
        )
        x_post = result.x_post
        new_carry = FilterCarry(
            x_post=x_post,
            d_evol=ops.sub(x_post, carry.x_post),
            d_update=ops.sub(x_post, x_prior),
            y_prev=np.asarray(y_t, dtype=float).copy(),
            gain_state=result.state,
        )
        return RecursionStep(x_prior=x_prior, x_post=x_post, y_pred=y_pred.value.copy(),
                             gains=result.gains, carry=new_carry)


class QNetStepper:
    """推理用逐步接口：x̂_0 = 0，截断开启，不记录梯度"""

    def __init__(self, net: GainNet, model: MeasurementModel):
        self.recursion = QNetRecursion(net, model, clamp=True)
        self.tape = Tape(net.store, record=False)
        self.carry = self.recursion.initial_carry(self.tape)

    def step(self, u_t: float, y_t: np.ndarray) -> StepRecord:
        result = self.recursion.step(self.carry, u_t, y_t, self.tape)
        self.carry = result.carry
        return StepRecord(
            x_prior=float(result.x_prior.value),
            x_post=float(result.x_post.value),
            y_pred=result.y_pred,
            gains=result.gains.value.copy(),
            u=float(u_t),
        )


def make_stepper(variant: str, model: MeasurementModel, gain_net: Optional[GainNet] = None,
                 ekf_params: Optional[EkfParams] = None):
    """
    按变体构造逐步滤波器

    Raises:
        ConfigError: 未知变体，或学习型变体缺少增益网络
    """
    if variant not in VARIANTS:
        raise ConfigError(f"未知的滤波变体: {variant}（可选 {VARIANTS}）")
    if variant == "qekf":
        return EkfStepper(model, ekf_params or EkfParams(), model.geometry.q_max_m)
    if gain_net is None:
        raise ConfigError(f"变体 {variant} 需要增益网络检查点")
    return QNetStepper(gain_net, model)
