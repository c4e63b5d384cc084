"""
端到端监督训练

每个 epoch：先用当前参数做推理前向得到各窗口初始状态，再逐窗口
前向（记录 Tape）→ RMSE → 窗口内 BPTT → 全局范数裁剪 → Adam。
窗口边界处只传递状态数值，不传递梯度。
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from core.exceptions import ConfigError, QueueNetDataError, QueueNetNumericError
from core.measurement import MeasurementModel
from core.models import SectionGeometry, SensorDay, SpeedRegimes
from estimator import FilterInputs, QNetRecursion, prepare_offline_inputs, run_inputs
from gainnet import GainNet, GainNetConfig
from neural import Tape, adam_step, clip_by_global_norm, ops
from .config import TrainConfig
from .windows import Window, slice_windows, window_loss

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    train_rmse: float
    val_rmse: float


@dataclass
class TrainResult:
    """训练结果；diverged=True 时 net 已恢复为最后一个良好参数"""
    net: GainNet
    history: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val_rmse: float = float("inf")
    diverged: bool = False
    checkpoint: Optional[Path] = None
    elapsed_s: float = 0.0
    budget_exhausted: bool = False

    def curve(self) -> pd.DataFrame:
        return pd.DataFrame([(r.epoch, r.train_rmse, r.val_rmse) for r in self.history],
                            columns=["epoch", "train_rmse", "val_rmse"])


@dataclass
class _PreparedDay:
    label: str
    inputs: FilterInputs
    truth: np.ndarray


def _prepare(days: Sequence[SensorDay], geometry: SectionGeometry, config: TrainConfig,
             role: str) -> List[_PreparedDay]:
    prepared = []
    for day in days:
        if day.ground_truth_m is None:
            raise QueueNetDataError(f"{role} 日 {day.label or '?'} 缺少真值排队长度")
        inputs = prepare_offline_inputs(day, geometry, config.variant, bandpass=config.bandpass,
                                        boundary_window_steps=config.boundary_window_steps)
        prepared.append(_PreparedDay(day.label, inputs, np.asarray(day.ground_truth_m, dtype=float)))
    return prepared


def forward_window(recursion: QNetRecursion, window: Window, inputs: FilterInputs, tape: Tape):
    """在 tape 上记录一个窗口的递推，返回后验估计节点 (steps,)"""
    carry = window.carry.detach(tape)
    posteriors = []
    for k in range(window.start, window.stop):
        step = recursion.step(carry, inputs.u[k], inputs.speeds[:, k], tape)
        carry = step.carry
        posteriors.append(step.x_post)
    return ops.stack(posteriors)


def window_gradient(recursion: QNetRecursion, window: Window, inputs: FilterInputs,
                    truth: np.ndarray):
    """一个窗口的 (损失值, 扁平梯度)"""
    tape = Tape(recursion.net.store, record=True)
    estimates = forward_window(recursion, window, inputs, tape)
    loss = window_loss(estimates, truth[window.start:window.stop])
    if not np.isfinite(loss.value):
        raise QueueNetNumericError(f"窗口 {window.index} 的损失非有限")
    return float(loss.value), tape.backward(loss)


def evaluate_rmse(net: GainNet, model: MeasurementModel, days: Sequence[_PreparedDay],
                  variant: str = "qnet") -> float:
    """推理语义（开启截断）下的合并 RMSE"""
    total, count = 0.0, 0
    for day in days:
        trace = run_inputs(day.inputs, model, variant, gain_net=net)
        total += float(np.sum((trace.posterior_m - day.truth) ** 2))
        count += day.truth.size
    return float(np.sqrt(total / count)) if count else float("nan")


def write_loss_curve(result: TrainResult, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    result.curve().to_csv(path, index=False, encoding="utf-8", float_format="%.6f")
    return path


def train(
    train_days: Sequence[SensorDay],
    validation_days: Sequence[SensorDay],
    geometry: SectionGeometry,
    regimes: SpeedRegimes,
    config: Optional[TrainConfig] = None,
    gain_config: Optional[GainNetConfig] = None,
    net: Optional[GainNet] = None,
    checkpoint_path: Optional[Union[str, Path]] = None,
) -> TrainResult:
    """
    训练增益网络

    Args:
        train_days / validation_days: 带真值的日数据；无验证日时用训练集的截断 RMSE 选择检查点
        config: 训练超参数
        gain_config / net: 网络结构或已有网络（二选一，缺省按 config.seed 新建）
        checkpoint_path: 最优验证检查点的保存路径

    Returns:
        TrainResult；发散时 diverged=True 且参数已回退

    Raises:
        ConfigError: 没有训练日
        QueueNetDataError: 训练 / 验证日缺少真值
    """
    config = config or TrainConfig()
    if not train_days:
        raise ConfigError("至少需要 1 个带真值的训练日")
    started = time.perf_counter()
    net = net or GainNet(gain_config, seed=config.seed)
    model = MeasurementModel(geometry, regimes)
    recursion = QNetRecursion(net, model, clamp=config.clamp_in_training)
    train_set = _prepare(train_days, geometry, config, "训练")
    val_set = _prepare(validation_days, geometry, config, "验证")
    select_set = val_set or train_set
    rng = np.random.default_rng(config.seed)

    result = TrainResult(net=net)
    best_values = net.store.snapshot()
    result.best_val_rmse = evaluate_rmse(net, model, select_set, config.variant)
    stale = 0
    logger.info("开始训练: %d 个训练日, %d 个验证日, %d 个参数, 初始验证 RMSE %.3f m",
                len(train_set), len(val_set), net.parameter_count, result.best_val_rmse)

    for epoch in range(1, config.epochs + 1):
        epoch_started = time.perf_counter()
        sq_sum, n_steps = 0.0, 0
        try:
            for d in rng.permutation(len(train_set)):
                day = train_set[d]
                for window in slice_windows(day.inputs, recursion, config.window_steps):
                    loss, grads = window_gradient(recursion, window, day.inputs, day.truth)
                    grads, _ = clip_by_global_norm(grads, config.grad_clip)
                    adam_step(net.store, grads, lr=config.lr)
                    sq_sum += loss * loss * window.steps
                    n_steps += window.steps
            val_rmse = evaluate_rmse(net, model, select_set, config.variant)
            if not np.isfinite(val_rmse):
                raise QueueNetNumericError("验证 RMSE 非有限")
        except QueueNetNumericError as exc:
            logger.error("第 %d 个 epoch 发散，回退到最后一个良好参数: %s", epoch, exc)
            net.store.load(best_values)
            net.store.reset_optimizer()
            result.diverged = True
            break

        train_rmse = float(np.sqrt(sq_sum / n_steps)) if n_steps else float("nan")
        result.history.append(EpochRecord(epoch, train_rmse, val_rmse))
        logger.info("epoch %d: train RMSE %.3f m, val RMSE %.3f m", epoch, train_rmse, val_rmse)

        if val_rmse < result.best_val_rmse:
            result.best_val_rmse = val_rmse
            result.best_epoch = epoch
            best_values = net.store.snapshot()
            stale = 0
            if checkpoint_path is not None:
                result.checkpoint = net.save(checkpoint_path, meta={
                    "epoch": epoch, "val_rmse": val_rmse, "train": config.to_dict()})
                logger.info("已保存最优检查点: %s（epoch %d）", result.checkpoint, epoch)
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("验证 RMSE 连续 %d 个 epoch 未改善，提前停止", stale)
                break

        now = time.perf_counter()
        if config.time_budget_s is not None and (now - started) + (now - epoch_started) > config.time_budget_s:
            logger.info("已训练 %.1f s，下一个 epoch 预计超出 %.0f s 的时间预算，停止训练",
                        now - started, config.time_budget_s)
            result.budget_exhausted = True
            break

    net.store.load(best_values)
    if checkpoint_path is not None and result.checkpoint is None:
        result.checkpoint = net.save(checkpoint_path, meta={"epoch": result.best_epoch,
                                                            "train": config.to_dict()})
    result.elapsed_s = time.perf_counter() - started
    logger.info("训练结束: 最优 epoch %d, 用时 %.1f s", result.best_epoch, result.elapsed_s)
    return result
