"""
训练配置与数据划分
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.control import DEFAULT_BAND, DEFAULT_BOUNDARY_WINDOW_STEPS
from core.exceptions import ConfigError
from core.models import SensorDay
from estimator import LEARNED_VARIANTS

logger = logging.getLogger(__name__)

# 10 min 窗口
DEFAULT_WINDOW_STEPS = 60
DEFAULT_EPOCHS = 50
DEFAULT_PATIENCE = 10
DEFAULT_GRAD_CLIP = 10.0
# 对比实验中单次训练的墙钟预算（秒）
EXPERIMENT_TIME_BUDGET_S = 540.0


@dataclass(frozen=True)
class TrainConfig:
    """
    训练超参数

    lr = 0 合法（参数冻结，用于诊断）；clamp_in_training 默认关闭，
    验证与测试总是开启截断。variant="qnet_no_u" 用于无控制输入的消融训练。
    time_budget_s 给定时，预计下一个 epoch 会超出预算就停止（只在 epoch 之间检查）。
    """
    window_steps: int = DEFAULT_WINDOW_STEPS
    lr: float = 1e-3
    epochs: int = DEFAULT_EPOCHS
    patience: int = DEFAULT_PATIENCE
    seed: int = 0
    clamp_in_training: bool = False
    grad_clip: float = DEFAULT_GRAD_CLIP
    bandpass: Tuple[float, float] = DEFAULT_BAND
    boundary_window_steps: int = DEFAULT_BOUNDARY_WINDOW_STEPS
    variant: str = "qnet"
    time_budget_s: Optional[float] = None

    def __post_init__(self) -> None:
        if self.variant not in LEARNED_VARIANTS:
            raise ConfigError(f"只能训练带增益网络的变体 {LEARNED_VARIANTS}: {self.variant}")
        object.__setattr__(self, "bandpass", tuple(float(v) for v in self.bandpass))
        if self.window_steps < 1:
            raise ConfigError(f"window_steps 必须 ≥ 1: {self.window_steps}")
        if not (self.lr >= 0 and np.isfinite(self.lr)):
            raise ConfigError(f"学习率必须为非负有限值: {self.lr}")
        if self.epochs < 1 or self.patience < 1:
            raise ConfigError(f"epochs / patience 必须 ≥ 1: {self.epochs}, {self.patience}")
        if not self.grad_clip > 0:
            raise ConfigError(f"梯度裁剪范数必须 > 0: {self.grad_clip}")
        if self.time_budget_s is not None and not self.time_budget_s > 0:
            raise ConfigError(f"训练时间预算必须 > 0 秒: {self.time_budget_s}")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["bandpass"] = list(self.bandpass)
        return data

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "TrainConfig":
        data = dict(data or {})
        if "bandpass" in data:
            data["bandpass"] = tuple(data["bandpass"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"训练配置字段无效: {exc}") from exc


@dataclass(frozen=True)
class DataSplit:
    """训练 / 验证 / 测试日列表（互不相交，按对象身份判断）"""
    train: Tuple[SensorDay, ...] = field(default_factory=tuple)
    validation: Tuple[SensorDay, ...] = field(default_factory=tuple)
    test: Tuple[SensorDay, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for name in ("train", "validation", "test"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        seen: Dict[int, str] = {}
        for name in ("train", "validation", "test"):
            for day in getattr(self, name):
                if id(day) in seen:
                    raise ConfigError(f"同一天同时出现在 {seen[id(day)]} 与 {name} 中: {day.label}")
                seen[id(day)] = name

    def sizes(self) -> Dict[str, int]:
        return {"train": len(self.train), "validation": len(self.validation), "test": len(self.test)}


def _allocate(count: int, validation_fraction: float, test_fraction: float) -> Tuple[int, int]:
    n_test = int(round(count * test_fraction))
    n_val = int(round(count * validation_fraction))
    while n_test + n_val > count:
        if n_val >= n_test and n_val > 0:
            n_val -= 1
        else:
            n_test -= 1
    return n_val, n_test


def split_days(days: Sequence[SensorDay], weekend: Optional[Sequence[bool]] = None,
               validation_fraction: float = 0.2, test_fraction: float = 0.2,
               seed: int = 0) -> DataSplit:
    """
    随机划分训练 / 验证 / 测试日

    有工作日 / 周末标签时两类分别按比例划分再合并，使各集合的构成平衡。

    Raises:
        ConfigError: 比例越界、标签数与天数不符，或训练集为空
    """
    if not (0 <= validation_fraction < 1 and 0 <= test_fraction < 1
            and validation_fraction + test_fraction < 1):
        raise ConfigError(f"划分比例无效: validation={validation_fraction}, test={test_fraction}")
    if weekend is None:
        weekend = [False] * len(days)
    if len(weekend) != len(days):
        raise ConfigError(f"周末标签数 {len(weekend)} 与天数 {len(days)} 不一致")

    rng = np.random.default_rng(seed)
    parts: Dict[str, List[SensorDay]] = {"train": [], "validation": [], "test": []}
    for flag in (False, True):
        group = [day for day, w in zip(days, weekend) if bool(w) == flag]
        if not group:
            continue
        order = rng.permutation(len(group))
        n_val, n_test = _allocate(len(group), validation_fraction, test_fraction)
        parts["test"].extend(group[i] for i in order[:n_test])
        parts["validation"].extend(group[i] for i in order[n_test:n_test + n_val])
        parts["train"].extend(group[i] for i in order[n_test + n_val:])

    if not parts["train"]:
        raise ConfigError("划分后训练集为空")
    split = DataSplit(**parts)
    logger.info("数据划分: %s", split.sizes())
    return split
