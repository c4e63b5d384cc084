"""
学习型卡尔曼增益网络

五个子模块对全部分组按行批量计算（行之间互不影响），参数跨组共享，隐状态逐组保存。
输入特征先归一化（排队量 / q_max，速度量 / v_free），输出的归一化增益再乘以
q_max / v_free 还原为物理增益，同一组参数因此可用于不同几何的路段。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from core.exceptions import CheckpointError, NumericError
from neural import (
    DenseLayer,
    GruCell,
    Node,
    ParameterStore,
    Tape,
    fc_forward,
    gru_forward,
    ops,
    read_checkpoint,
    restore_parameters,
    save_checkpoint,
)
from .config import GROUP_SIZE, GainNetConfig, parameter_count
from .features import FeatureScale, GainFeatures

logger = logging.getLogger(__name__)

Operand = Union[Node, np.ndarray, float]


@dataclass
class GainNetState:
    """
    逐组隐状态，各为 (G, H)

    gru_hidden_sigma 在子模块 e 之后被 Σ̂ʰ 替换，因此它同时就是 sigma_h。
    """
    gru_hidden_q: Node
    gru_hidden_sigma: Node
    gru_hidden_s: Node

    @property
    def sigma_h(self) -> Node:
        return self.gru_hidden_sigma

    @property
    def n_groups(self) -> int:
        return int(self.gru_hidden_q.shape[0])

    def values(self) -> Dict[str, np.ndarray]:
        return {
            "gru_hidden_q": self.gru_hidden_q.value.copy(),
            "gru_hidden_sigma": self.gru_hidden_sigma.value.copy(),
            "gru_hidden_s": self.gru_hidden_s.value.copy(),
        }

    def detach(self, tape: Tape) -> "GainNetState":
        """截断梯度：把当前值作为常量放到新的 Tape 上"""
        return GainNetState(
            tape.constant(self.gru_hidden_q.value.copy()),
            tape.constant(self.gru_hidden_sigma.value.copy()),
            tape.constant(self.gru_hidden_s.value.copy()),
        )

    @classmethod
    def zeros(cls, config: GainNetConfig, n_groups: int, tape: Tape) -> "GainNetState":
        """日初的全零隐状态"""
        return cls(
            tape.constant(np.zeros((n_groups, config.q_hidden))),
            tape.constant(np.zeros((n_groups, config.sigma_hidden))),
            tape.constant(np.zeros((n_groups, config.s_hidden))),
        )


def _check_finite(node: Node, stage: str) -> Node:
    if not np.all(np.isfinite(node.value)):
        raise NumericError(f"增益网络子模块 {stage} 产生非有限值", stage=stage)
    return node


class GainNet:
    """
    Args:
        config: 结构配置（默认约 955 个参数）
        seed: 初始化随机种子
    """

    def __init__(self, config: Optional[GainNetConfig] = None, seed: int = 0):
        self.config = config or GainNetConfig()
        self.seed = seed
        self.blocks: Dict[str, Union[DenseLayer, GruCell]] = {b.name: b for b in self.config.blocks()}
        self.store = ParameterStore()
        rng = np.random.default_rng(seed)
        for block in self.blocks.values():
            block.register(self.store, rng)
        expected = parameter_count(self.config)
        if self.store.audit() != expected:
            raise CheckpointError(f"参数量审计失败: 存储 {self.store.size}，闭式 {expected}")

    @property
    def parameter_count(self) -> int:
        return self.store.size

    def initial_state(self, n_groups: int, tape: Tape) -> GainNetState:
        return GainNetState.zeros(self.config, n_groups, tape)

    def _fc(self, name: str, x: Operand, tape: Tape) -> Node:
        return fc_forward(self.blocks[name], x, tape)

    def _gru(self, name: str, x: Operand, h: Node, tape: Tape) -> Node:
        return gru_forward(self.blocks[name], x, h, tape)

    def forward(self, d_meas: Operand, d_innov: Operand, d_evol: Operand, d_update: Operand,
                state: GainNetState, tape: Tape, scale: FeatureScale) -> Tuple[Node, GainNetState]:
        """
        子模块 a–e 的批量前向

        Args:
            d_meas, d_innov: (G, 3) 物理单位（m/s）
            d_evol, d_update: 标量（m），可以是 Tape 上的节点以便 BPTT
            state: 上一步隐状态
            scale: 特征归一化

        Returns:
            (物理增益 (G, 3), 新隐状态)

        Raises:
            NumericError: 某个子模块输出非有限值（stage 为子模块名）
        """
        groups = state.n_groups
        column = np.ones((groups, 1))
        inv_q = 1.0 / scale.q_max
        inv_v = 1.0 / scale.v_free

        dx_update = ops.scale(ops.mul(column, tape.lift(d_update)), inv_q)
        dx_evol = ops.scale(ops.mul(column, tape.lift(d_evol)), inv_q)
        meas = ops.scale(ops.concat([tape.lift(d_meas), tape.lift(d_innov)]), inv_v)

        # a: 过程噪声
        q_hat = _check_finite(
            self._gru("a.gru", self._fc("a.fc", dx_update, tape), state.gru_hidden_q, tape), "a")
        # b: 状态二阶矩
        sigma = _check_finite(self._gru(
            "b.gru", ops.concat([q_hat, self._fc("b.fc", dx_evol, tape)]), state.gru_hidden_sigma, tape), "b")
        # c: 新息协方差
        s_in = ops.concat([self._fc("c.fc_sigma", sigma, tape), self._fc("c.fc_meas", meas, tape)])
        s_hat = _check_finite(self._gru("c.gru", s_in, state.gru_hidden_s, tape), "c")
        # d: 增益
        gain = _check_finite(
            self._fc("d.out", self._fc("d.fc", ops.concat([sigma, s_hat]), tape), tape), "d")
        # e: 回写 b 的隐状态
        inner = self._fc("e.fc", ops.concat([gain, s_hat]), tape)
        sigma_h = _check_finite(self._fc("e.out", ops.concat([sigma, inner]), tape), "e")

        physical = ops.scale(gain, scale.gain_scale)
        return physical, GainNetState(q_hat, sigma_h, s_hat)

    def compute_gain(self, features: GainFeatures, state: GainNetState, scale: FeatureScale,
                     tape: Optional[Tape] = None) -> Tuple[np.ndarray, GainNetState]:
        """数组接口：返回 ((G, 3) 物理增益, 新隐状态)；默认不记录梯度"""
        tape = tape or Tape(self.store, record=False)
        gains, new_state = self.forward(features.d_meas, features.d_innov, features.d_evol,
                                        features.d_update, state, tape, scale)
        return gains.value.copy(), new_state

    # ========== 检查点 ==========

    def checkpoint_config(self) -> Dict[str, Any]:
        return {"gainnet": self.config.to_dict(), "group_size": GROUP_SIZE}

    def save(self, path: Union[str, Path], meta: Optional[Dict[str, Any]] = None) -> Path:
        return save_checkpoint(path, self.store, self.checkpoint_config(), meta)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "GainNet":
        """按检查点内的配置重建网络并载入参数；维度不符时抛 CheckpointError"""
        payload = read_checkpoint(path)
        config_data = (payload.get("config") or {}).get("gainnet")
        if config_data is None:
            raise CheckpointError(f"检查点缺少 gainnet 配置: {path}")
        net = cls(GainNetConfig.from_dict(config_data))
        restore_parameters(net.store, payload)
        logger.info("已加载增益网络: %s（%d 个参数）", path, net.parameter_count)
        return net
