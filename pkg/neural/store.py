"""
扁平参数存储

所有可训练参数放在一个 float64 向量里，按注册顺序划分为命名切片；
Adam 的一阶 / 二阶矩与参数向量一一对齐。
"""
from __future__ import annotations

import logging
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DimensionError

logger = logging.getLogger(__name__)


class ParameterStore:
    """θ：命名切片 + 扁平向量 + 优化器状态"""

    def __init__(self) -> None:
        self.values = np.zeros(0, dtype=np.float64)
        self.m = np.zeros(0, dtype=np.float64)
        self.v = np.zeros(0, dtype=np.float64)
        self.step = 0
        self._slices: Dict[str, Tuple[int, int]] = {}
        self._shapes: Dict[str, Tuple[int, ...]] = {}

    # ========== 注册 ==========

    def add(self, name: str, shape: Sequence[int], init: Optional[np.ndarray] = None) -> None:
        """追加一个命名参数块；init 为空时初始化为 0"""
        if name in self._slices:
            raise DimensionError(f"参数名重复: {name}")
        shape = tuple(int(s) for s in shape)
        size = int(np.prod(shape)) if shape else 1
        block = np.zeros(size) if init is None else np.asarray(init, dtype=np.float64).ravel()
        if block.size != size:
            raise DimensionError(f"参数 {name} 初始值大小 {block.size} 与形状 {shape} 不符")
        start = self.values.size
        self.values = np.concatenate([self.values, block])
        self.m = np.concatenate([self.m, np.zeros(size)])
        self.v = np.concatenate([self.v, np.zeros(size)])
        self._slices[name] = (start, start + size)
        self._shapes[name] = shape

    # ========== 查询 ==========

    @property
    def size(self) -> int:
        return int(self.values.size)

    def names(self) -> List[str]:
        return list(self._slices)

    def shape(self, name: str) -> Tuple[int, ...]:
        return self._shapes[name]

    def span(self, name: str) -> Tuple[int, int]:
        return self._slices[name]

    def view(self, name: str) -> np.ndarray:
        """按形状返回参数块的视图（与 values 共享内存）"""
        start, stop = self._slices[name]
        return self.values[start:stop].reshape(self._shapes[name])

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        for name in self._slices:
            yield name, self.view(name)

    def slice_of(self, index: int) -> str:
        for name, (start, stop) in self._slices.items():
            if start <= index < stop:
                return name
        raise DimensionError(f"参数下标越界: {index}")

    def audit(self) -> int:
        """按切片形状逐块累加的参数总数；应等于 size"""
        total = sum(int(np.prod(shape)) if shape else 1 for shape in self._shapes.values())
        if total != self.size:
            raise DimensionError(f"切片总数 {total} 与参数向量长度 {self.size} 不一致")
        return total

    def layout(self) -> List[Dict[str, object]]:
        return [
            {"name": name, "shape": list(self._shapes[name]), "offset": start, "size": stop - start}
            for name, (start, stop) in self._slices.items()
        ]

    # ========== 梯度 / 快照 ==========

    def flatten(self, grads: Dict[str, np.ndarray]) -> np.ndarray:
        """把 {名称: 梯度块} 拼成与 values 对齐的扁平向量，缺省块为 0"""
        flat = np.zeros(self.size)
        for name, grad in grads.items():
            start, stop = self._slices[name]
            flat[start:stop] = np.asarray(grad, dtype=np.float64).ravel()
        return flat

    def snapshot(self) -> np.ndarray:
        return self.values.copy()

    def load(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise DimensionError(f"参数长度不匹配: {values.shape} vs {self.values.shape}")
        self.values[:] = values

    def reset_optimizer(self) -> None:
        self.m[:] = 0.0
        self.v[:] = 0.0
        self.step = 0

    def __len__(self) -> int:
        return self.size
