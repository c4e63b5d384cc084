"""
记录式反向模式自动微分

Tape 按创建顺序记录节点；反向传播时逆序逐个访问，每个节点恰好一次。
record=False 时只做前向计算（推理），同一套算子代码路径。
"""
from __future__ import annotations

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import TapeError
from .store import ParameterStore

logger = logging.getLogger(__name__)

VjpFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Node:
    """计算图节点：前向值、累积梯度、父节点与向量-雅可比积"""

    __slots__ = ("value", "grad", "parents", "vjp", "tape", "index", "name")

    def __init__(self, value: np.ndarray, tape: Optional["Tape"] = None,
                 parents: Tuple["Node", ...] = (), vjp: Optional[VjpFn] = None,
                 name: Optional[str] = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self.vjp = vjp
        self.tape = tape
        self.index = -1
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Node{label}(shape={self.shape})"

    # 运算符重载委托给 ops，避免循环导入
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """把广播后的梯度按原形状求和还原"""
    grad = np.asarray(grad, dtype=np.float64)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tape:
    """
    一个窗口前向过程的计算图

    Args:
        store: 参数存储；param() 从这里取值并把梯度映射回扁平向量
        record: False 时不记录（推理模式），backward 不可用
    """

    def __init__(self, store: Optional[ParameterStore] = None, record: bool = True):
        self.store = store
        self.record = record
        self.nodes: List[Node] = []
        self._params: Dict[str, Node] = {}
        self.backward_visits = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def _append(self, node: Node) -> Node:
        if self.record:
            node.index = len(self.nodes)
            self.nodes.append(node)
        return node

    # ========== 叶子节点 ==========

    def constant(self, value, name: Optional[str] = None) -> Node:
        """不需要梯度的常量叶子"""
        return self._append(Node(value, self, name=name))

    def variable(self, value, name: Optional[str] = None) -> Node:
        """需要梯度的输入叶子（BPTT 跨步串接时读取其 grad）"""
        return self._append(Node(value, self, name=name))

    def param(self, name: str) -> Node:
        """参数叶子；同一 Tape 内同名参数只建一个节点，梯度自然累加"""
        if self.store is None:
            raise TapeError("Tape 未绑定 ParameterStore，无法读取参数")
        node = self._params.get(name)
        if node is None:
            node = self._append(Node(self.store.view(name).copy(), self, name=name))
            self._params[name] = node
        return node

    def lift(self, value) -> Node:
        if isinstance(value, Node):
            if value.tape is not self and self.record:
                raise TapeError(f"节点 {value!r} 属于另一个 Tape，请先 detach")
            return value
        return self.constant(value)

    # ========== 记录 ==========

    def apply(self, value, parents: Sequence[Node], vjp: VjpFn, name: Optional[str] = None) -> Node:
        """记录一个运算结果节点；推理模式下不保留父节点"""
        if not self.record:
            return Node(value, self, name=name)
        return self._append(Node(value, self, tuple(parents), vjp, name))

    # ========== 反向 ==========

    def backward(self, output: Node, seed: Optional[np.ndarray] = None) -> np.ndarray:
        """
        反向传播

        Args:
            output: 损失节点（须属于本 Tape）
            seed: 输出梯度；缺省为全 1

        Returns:
            与 ParameterStore.values 对齐的扁平梯度向量

        Raises:
            TapeError: 未记录前向、或 output 不属于本 Tape
        """
        if not self.record or not self.nodes:
            raise TapeError("尚未记录前向计算，无法反向传播")
        if output.tape is not self or output.index < 0:
            raise TapeError(f"节点 {output!r} 不属于当前 Tape")

        grads: List[Optional[np.ndarray]] = [None] * len(self.nodes)
        grads[output.index] = (np.ones_like(output.value) if seed is None
                               else np.asarray(seed, dtype=np.float64).reshape(output.shape))
        self.backward_visits = 0
        for i in range(len(self.nodes) - 1, -1, -1):
            self.backward_visits += 1
            node = self.nodes[i]
            g = grads[i]
            node.grad = g
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                pg = unbroadcast(pg, parent.shape)
                j = parent.index
                grads[j] = pg if grads[j] is None else grads[j] + pg

        if self.store is None:
            return np.zeros(0)
        blocks = {name: node.grad for name, node in self._params.items() if node.grad is not None}
        return self.store.flatten(blocks)

    def input_grad(self, node: Node) -> np.ndarray:
        """backward 之后读取某个叶子的梯度（未参与则为 0）"""
        return np.zeros_like(node.value) if node.grad is None else node.grad
