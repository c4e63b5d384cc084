"""
可微算子

只覆盖增益网络、滤波递推与损失函数用到的算子集合。
所有算子接受 Node 或数组，结果节点记录在第一个 Node 所属的 Tape 上。
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from .exceptions import DimensionError, TapeError
from .tape import Node, Tape

Operand = Union[Node, np.ndarray, float]


def _tape_of(*operands: Operand) -> Tape:
    for operand in operands:
        if isinstance(operand, Node) and operand.tape is not None:
            return operand.tape
    raise TapeError("算子至少需要一个绑定到 Tape 的 Node 操作数")


def _lift(tape: Tape, *operands: Operand):
    return tuple(tape.lift(o) for o in operands)


# ========== 逐元素 ==========

def add(a: Operand, b: Operand) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a, b)
    return tape.apply(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Operand, b: Operand) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a, b)
    return tape.apply(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a: Operand, b: Operand) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a, b)
    av, bv = a.value, b.value
    return tape.apply(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Node, factor: float) -> Node:
    tape = _tape_of(a)
    return tape.apply(a.value * factor, (a,), lambda g: (g * factor,))


def square(a: Node) -> Node:
    tape = _tape_of(a)
    av = a.value
    return tape.apply(av * av, (a,), lambda g: (2.0 * g * av,))


def sqrt(a: Node) -> Node:
    """平方根；在 0 处的梯度取 0"""
    tape = _tape_of(a)
    out = np.sqrt(a.value)

    def vjp(g):
        safe = np.where(out > 0.0, out, 1.0)
        return (np.where(out > 0.0, g / (2.0 * safe), 0.0),)

    return tape.apply(out, (a,), vjp)


def sigmoid(a: Node) -> Node:
    tape = _tape_of(a)
    out = expit(a.value)
    return tape.apply(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Node) -> Node:
    tape = _tape_of(a)
    out = np.tanh(a.value)
    return tape.apply(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Node) -> Node:
    tape = _tape_of(a)
    mask = a.value > 0.0
    return tape.apply(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def clip(a: Node, lo: float, hi: float) -> Node:
    """截断；区间外梯度为 0"""
    tape = _tape_of(a)
    inside = (a.value >= lo) & (a.value <= hi)
    return tape.apply(np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,))


ACTIVATIONS: dict = {
    "identity": lambda node: node,
    "relu": relu,
    "tanh": tanh,
}


# ========== 线性代数 ==========

def linear(x: Node, weight: Node, bias: Optional[Node] = None) -> Node:
    """x @ Wᵀ + b；x 为 (in,) 或 (G, in)，W 为 (out, in)"""
    tape = _tape_of(x, weight)
    x, weight = _lift(tape, x, weight)
    xv, wv = x.value, weight.value
    if xv.shape[-1] != wv.shape[1]:
        raise DimensionError(f"输入维度 {xv.shape[-1]} 与权重输入维度 {wv.shape[1]} 不一致")
    out = xv @ wv.T
    parents = [x, weight]
    if bias is not None:
        bias = tape.lift(bias)
        out = out + bias.value
        parents.append(bias)

    def vjp(g):
        gx = g @ wv
        gw = np.outer(g, xv) if xv.ndim == 1 else g.T @ xv
        if bias is None:
            return gx, gw
        return gx, gw, g

    return tape.apply(out, parents, vjp)


def concat(nodes: Sequence[Operand], axis: int = -1) -> Node:
    tape = _tape_of(*nodes)
    lifted = _lift(tape, *nodes)
    sizes = [n.value.shape[axis] for n in lifted]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([n.value for n in lifted], axis=axis)
    return tape.apply(out, lifted, lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(nodes: Sequence[Node], axis: int = 0) -> Node:
    tape = _tape_of(*nodes)
    lifted = _lift(tape, *nodes)
    out = np.stack([n.value for n in lifted], axis=axis)

    def vjp(g):
        return tuple(np.take(g, k, axis=axis) for k in range(len(lifted)))

    return tape.apply(out, lifted, vjp)


def take(a: Node, indices, axis: int = -1) -> Node:
    """按下标取元素（可重复）；梯度按下标散加回去"""
    tape = _tape_of(a)
    idx = np.asarray(indices)
    shape = a.value.shape
    out = np.take(a.value, idx, axis=axis)

    def vjp(g):
        grad = np.zeros(shape)
        if len(shape) == 1:
            np.add.at(grad, idx, g)
            return (grad,)
        if idx.ndim != 1:
            raise TapeError("多维输入只支持一维下标的 take")
        np.add.at(np.moveaxis(grad, axis, 0), idx, np.moveaxis(g, axis, 0))
        return (grad,)

    return tape.apply(out, (a,), vjp)


def reduce_sum(a: Node, axis: Optional[int] = None) -> Node:
    tape = _tape_of(a)
    shape = a.value.shape
    out = a.value.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return tape.apply(out, (a,), vjp)


def mean(a: Node) -> Node:
    return scale(reduce_sum(a), 1.0 / a.value.size)


def rowwise_dot(a: Operand, b: Operand) -> Node:
    """逐行点积：(G, k)·(G, k) → (G,)"""
    return reduce_sum(mul(a, b), axis=-1)


def custom(value, parents: Sequence[Node], vjp: Callable) -> Node:
    """以给定前向值与 VJP 记录一个自定义算子（例如测量函数 h）"""
    tape = _tape_of(*parents)
    return tape.apply(value, _lift(tape, *parents), vjp)
