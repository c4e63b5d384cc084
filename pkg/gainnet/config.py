"""
增益网络结构配置与参数量闭式计算
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, List, Union

from core.exceptions import ConfigError
from neural import DenseLayer, GruCell

# 局部分组：中心分段及其左右邻居
GROUP_SIZE = 3
# 每组输入：Δỹ 与 Δȳ 各 3 维
MEASUREMENT_FEATURES = 2 * GROUP_SIZE

Block = Union[DenseLayer, GruCell]


@dataclass(frozen=True)
class GainNetConfig:
    """
    五个子模块的宽度

    a: Q̂  = GRU_q(FC_q(Δx̂))
    b: Σ̂  = GRU_σ([Q̂, FC_evol(Δx̃)])
    c: Ŝ  = GRU_s([FC_σ(Σ̂), FC_meas([Δỹ, Δȳ])])
    d: K  = FC_out(FC_gain([Σ̂, Ŝ]))
    e: Σ̂ʰ = FC_e_out([Σ̂, FC_e_in([K, Ŝ])])
    """
    q_fc: int = 8
    q_hidden: int = 4
    evol_fc: int = 8
    sigma_hidden: int = 4
    sigma_fc: int = 8
    meas_fc: int = 8
    s_hidden: int = 4
    gain_hidden: int = 8
    e_fc: int = 8

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"GainNetConfig.{f.name} 必须是 ≥ 1 的整数: {value!r}")

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GainNetConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"GainNetConfig 中有未知字段: {sorted(unknown)}")
        return cls(**{k: int(v) for k, v in data.items()})

    def blocks(self) -> List[Block]:
        """按注册顺序列出全部层（决定参数切片顺序）"""
        # a.fc / b.fc 的输入是很小的标量差分，用 tanh 避免 relu 整列失活
        return [
            DenseLayer("a.fc", 1, self.q_fc, "tanh"),
            GruCell("a.gru", self.q_fc, self.q_hidden),
            DenseLayer("b.fc", 1, self.evol_fc, "tanh"),
            GruCell("b.gru", self.q_hidden + self.evol_fc, self.sigma_hidden),
            DenseLayer("c.fc_sigma", self.sigma_hidden, self.sigma_fc, "relu"),
            DenseLayer("c.fc_meas", MEASUREMENT_FEATURES, self.meas_fc, "relu"),
            GruCell("c.gru", self.sigma_fc + self.meas_fc, self.s_hidden),
            DenseLayer("d.fc", self.sigma_hidden + self.s_hidden, self.gain_hidden, "relu"),
            DenseLayer("d.out", self.gain_hidden, GROUP_SIZE, "identity"),
            DenseLayer("e.fc", GROUP_SIZE + self.s_hidden, self.e_fc, "relu"),
            DenseLayer("e.out", self.sigma_hidden + self.e_fc, self.sigma_hidden, "tanh"),
        ]


def _gru_count(in_dim: int, hidden: int) -> int:
    return 3 * hidden * (in_dim + hidden + 1)


def _fc_count(in_dim: int, out_dim: int) -> int:
    return out_dim * (in_dim + 1)


def parameter_count(config: GainNetConfig) -> int:
    """闭式参数量；与 ParameterStore.audit() 的逐块计数一致"""
    c = config
    return (
        _fc_count(1, c.q_fc)
        + _gru_count(c.q_fc, c.q_hidden)
        + _fc_count(1, c.evol_fc)
        + _gru_count(c.q_hidden + c.evol_fc, c.sigma_hidden)
        + _fc_count(c.sigma_hidden, c.sigma_fc)
        + _fc_count(MEASUREMENT_FEATURES, c.meas_fc)
        + _gru_count(c.sigma_fc + c.meas_fc, c.s_hidden)
        + _fc_count(c.sigma_hidden + c.s_hidden, c.gain_hidden)
        + _fc_count(c.gain_hidden, GROUP_SIZE)
        + _fc_count(GROUP_SIZE + c.s_hidden, c.e_fc)
        + _fc_count(c.sigma_hidden + c.e_fc, c.sigma_hidden)
    )
