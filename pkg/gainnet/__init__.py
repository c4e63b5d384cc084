"""
学习型卡尔曼增益网络

特征构造、局部测量分组、子模块 a–e 与隐状态生命周期。
"""

from .config import GROUP_SIZE, GainNetConfig, parameter_count
from .features import (
    FeatureScale,
    GainFeatures,
    build_groups,
    group_indices,
    grouped_update,
)
from .network import GainNet, GainNetState

__all__ = [
    "GROUP_SIZE",
    "GainNetConfig",
    "parameter_count",
    "FeatureScale",
    "GainFeatures",
    "build_groups",
    "group_indices",
    "grouped_update",
    "GainNet",
    "GainNetState",
]
