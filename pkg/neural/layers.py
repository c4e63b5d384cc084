"""
全连接层与 GRU 单元

GRU 约定（固定）：
    z  = σ(x·W_zᵀ + h·U_zᵀ + b_z)
    r  = σ(x·W_rᵀ + h·U_rᵀ + b_r)
    h̃ = tanh(x·W_hᵀ + (r⊙h)·U_hᵀ + b_h)
    h' = (1 − z)⊙h + z⊙h̃
每个门一个偏置，参数量 3·H·(in + H + 1)。
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import ops
from .exceptions import DimensionError
from .store import ParameterStore
from .tape import Node, Tape

GRU_GATES = ("z", "r", "h")


def init_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    """U(−√(1/fan_in), +√(1/fan_in))"""
    bound = np.sqrt(1.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


@dataclass(frozen=True)
class DenseLayer:
    """y = act(x·Wᵀ + b)，W 为 out×in"""
    name: str
    in_dim: int
    out_dim: int
    activation: str = "identity"

    def __post_init__(self) -> None:
        if self.in_dim < 1 or self.out_dim < 1:
            raise DimensionError(f"全连接层 {self.name} 的维度必须 ≥ 1: {self.in_dim}→{self.out_dim}")
        if self.activation not in ops.ACTIVATIONS:
            raise DimensionError(f"未知激活函数: {self.activation}")

    @property
    def weight_name(self) -> str:
        return f"{self.name}.weight"

    @property
    def bias_name(self) -> str:
        return f"{self.name}.bias"

    @property
    def parameter_count(self) -> int:
        return self.out_dim * (self.in_dim + 1)

    def register(self, store: ParameterStore, rng: Optional[np.random.Generator] = None) -> None:
        w = init_uniform(rng, (self.out_dim, self.in_dim), self.in_dim) if rng is not None else None
        b = init_uniform(rng, (self.out_dim,), self.in_dim) if rng is not None else None
        store.add(self.weight_name, (self.out_dim, self.in_dim), w)
        store.add(self.bias_name, (self.out_dim,), b)

    def forward(self, x, tape: Tape) -> Node:
        return fc_forward(self, x, tape)


@dataclass(frozen=True)
class GruCell:
    name: str
    in_dim: int
    hidden_dim: int

    def __post_init__(self) -> None:
        if self.in_dim < 1 or self.hidden_dim < 1:
            raise DimensionError(f"GRU {self.name} 的维度必须 ≥ 1: in={self.in_dim}, hidden={self.hidden_dim}")

    def param_name(self, kind: str, gate: str) -> str:
        return f"{self.name}.{kind}_{gate}"

    @property
    def parameter_count(self) -> int:
        return 3 * self.hidden_dim * (self.in_dim + self.hidden_dim + 1)

    def register(self, store: ParameterStore, rng: Optional[np.random.Generator] = None) -> None:
        h, n = self.hidden_dim, self.in_dim
        # (形状, fan_in)：输入权重按 in_dim，循环权重与偏置按 hidden_dim
        blocks = (("W", (h, n), n), ("U", (h, h), h), ("b", (h,), h))
        for gate in GRU_GATES:
            for kind, shape, fan_in in blocks:
                init = init_uniform(rng, shape, fan_in) if rng is not None else None
                store.add(self.param_name(kind, gate), shape, init)

    def zeros(self, groups: Optional[int] = None) -> np.ndarray:
        return np.zeros(self.hidden_dim if groups is None else (groups, self.hidden_dim))

    def forward(self, x, hidden, tape: Tape) -> Node:
        return gru_forward(self, x, hidden, tape)


def fc_forward(layer: DenseLayer, x, tape: Tape) -> Node:
    """
    全连接前向

    Raises:
        DimensionError: 输入最后一维不等于 in_dim
    """
    x = tape.lift(x)
    if x.shape[-1] != layer.in_dim:
        raise DimensionError(f"{layer.name}: 输入长度 {x.shape[-1]} ≠ in_dim {layer.in_dim}")
    out = ops.linear(x, tape.param(layer.weight_name), tape.param(layer.bias_name))
    return ops.ACTIVATIONS[layer.activation](out)


def gru_forward(cell: GruCell, x, hidden, tape: Tape) -> Node:
    """GRU 单步；x 为 (in,) 或 (G, in)，hidden 为 (H,) 或 (G, H)"""
    x = tape.lift(x)
    h = tape.lift(hidden)
    if x.shape[-1] != cell.in_dim or h.shape[-1] != cell.hidden_dim:
        raise DimensionError(
            f"{cell.name}: 输入 {x.shape} / 隐状态 {h.shape} 与 in={cell.in_dim}, hidden={cell.hidden_dim} 不符"
        )

    def gate_pre(gate: str, state: Node) -> Node:
        wx = ops.linear(x, tape.param(cell.param_name("W", gate)), tape.param(cell.param_name("b", gate)))
        return ops.add(wx, ops.linear(state, tape.param(cell.param_name("U", gate))))

    z = ops.sigmoid(gate_pre("z", h))
    r = ops.sigmoid(gate_pre("r", h))
    candidate = ops.tanh(gate_pre("h", ops.mul(r, h)))
    return ops.add(h, ops.mul(z, ops.sub(candidate, h)))
