"""
实验编排：仿真数据上的训练 / 测试 / 空间迁移 / 消融对比

流程：
1. 按场景仿真 train + validation + test 天（日期连续，种子由 seed 派生）
2. 从训练日 aFCD 拟合速度双峰（失败时退回场景设定值）
3. 训练 Q-Net；开启消融时另训练一个无控制输入的 Q-Net
4. 测试日上运行 qnet / qnet_no_u / qekf / osd / isc，合并计算指标与提升率
5. 用同一个检查点在 transfer_segments 段的路段上运行，检验空间迁移
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from baselines import BASELINES
from core.exceptions import ConfigError, RegimeEstimationError
from core.io import normalize_output_dir, save_json
from core.measurement import estimate_regimes
from core.models import SectionGeometry, SensorDay, SpeedRegimes
from estimator import EkfParams, run_day
from gainnet import GainNet
from simulator import ScenarioConfig, SimOutput, simulate_days
from training import EXPERIMENT_TIME_BUDGET_S, TrainConfig, TrainResult, train, write_loss_curve
from .metrics import (
    ALL_DAY,
    DEFAULT_PEAKS,
    EvaluatedDay,
    MetricsReport,
    onset_lags,
    pooled_report,
)
from .report import improvement_rows, write_report_csv, write_report_json

logger = logging.getLogger(__name__)

FILTER_METHODS = ("qnet", "qnet_no_u", "qekf")
BASELINE_METHODS = ("osd", "isc")
COMPARISON_BASELINES = ("osd", "isc", "qekf")
# 单次训练受墙钟预算约束（Q-Net 与消融各自计时）
EXPERIMENT_TRAIN_DEFAULTS = {"epochs": 20, "time_budget_s": EXPERIMENT_TIME_BUDGET_S}


@dataclass(frozen=True)
class ExperimentConfig:
    """对比实验的协议参数"""
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    train_days: int = 8
    validation_days: int = 0
    test_days: int = 3
    transfer_segments: int = 8
    seed: int = 0
    train: TrainConfig = field(default_factory=lambda: TrainConfig(**EXPERIMENT_TRAIN_DEFAULTS))
    ekf: EkfParams = field(default_factory=EkfParams)
    ablation: bool = True
    transfer: bool = True
    peaks: Tuple[Tuple[str, str, str], ...] = tuple((k, *v) for k, v in DEFAULT_PEAKS.items())

    def __post_init__(self) -> None:
        if self.train_days < 1 or self.test_days < 1 or self.validation_days < 0:
            raise ConfigError(
                f"天数设置无效: train={self.train_days}, validation={self.validation_days}, test={self.test_days}"
            )
        if self.transfer_segments < 3:
            raise ConfigError(f"迁移路段至少需要 3 个分段: {self.transfer_segments}")

    @property
    def peak_windows(self) -> Dict[str, Tuple[str, str]]:
        return {name: (begin, end) for name, begin, end in self.peaks}

    def seeds(self) -> List[int]:
        total = self.train_days + self.validation_days + self.test_days
        return [self.seed * 1000 + i for i in range(total)]

    def transfer_geometry(self) -> SectionGeometry:
        g = self.scenario.geometry
        return SectionGeometry.uniform(f"{g.section_id}-x{self.transfer_segments}", g.length_m,
                                       g.lanes, self.transfer_segments, g.q_max_m)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario.to_dict(),
            "train_days": self.train_days,
            "validation_days": self.validation_days,
            "test_days": self.test_days,
            "transfer_segments": self.transfer_segments,
            "seed": self.seed,
            "train": self.train.to_dict(),
            "ekf": self.ekf.to_dict(),
            "ablation": self.ablation,
            "transfer": self.transfer,
            "peaks": {name: [begin, end] for name, begin, end in self.peaks},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        kwargs: Dict[str, Any] = {}
        if "scenario" in data:
            kwargs["scenario"] = ScenarioConfig.from_dict(data["scenario"])
        if "train" in data:
            kwargs["train"] = TrainConfig.from_dict({**EXPERIMENT_TRAIN_DEFAULTS, **data["train"]})
        if "ekf" in data:
            kwargs["ekf"] = EkfParams.from_dict(data["ekf"])
        if "peaks" in data:
            kwargs["peaks"] = tuple((name, *window) for name, window in data["peaks"].items())
        for key in ("train_days", "validation_days", "test_days", "transfer_segments", "seed"):
            if key in data:
                kwargs[key] = int(data[key])
        for key in ("ablation", "transfer"):
            if key in data:
                kwargs[key] = bool(data[key])
        return cls(**kwargs)


@dataclass
class BenchmarkResult:
    report: MetricsReport
    improvement: Dict[str, Any]
    onset: Dict[str, Dict[str, Optional[float]]]
    train_result: TrainResult
    regimes: SpeedRegimes
    ablation_result: Optional[TrainResult] = None
    transfer_report: Optional[MetricsReport] = None
    outputs: Dict[str, str] = field(default_factory=dict)

    def summary(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "improvement": self.improvement,
            "onset_lag_s": self.onset,
            "regimes": self.regimes.to_dict(),
            "best_epoch": self.train_result.best_epoch,
            "train_seconds": round(self.train_result.elapsed_s, 1),
            "diverged": self.train_result.diverged,
        }
        if self.transfer_report is not None:
            data["transfer"] = self.transfer_report.to_dict()
        return data


def fit_regimes(days: List[SensorDay], fallback: SpeedRegimes) -> SpeedRegimes:
    """从训练日 aFCD 拟合速度双峰，失败时使用 fallback"""
    samples = np.concatenate([d.afcd_speeds.ravel() for d in days])
    try:
        return estimate_regimes(samples)
    except RegimeEstimationError as exc:
        logger.warning("速度双峰估计失败，使用场景设定值: %s", exc)
        return fallback


def _estimates(day: SensorDay, geometry: SectionGeometry, regimes: SpeedRegimes,
               nets: Mapping[str, GainNet], config: ExperimentConfig) -> Dict[str, np.ndarray]:
    t = config.train
    estimates: Dict[str, np.ndarray] = {}
    for variant in FILTER_METHODS:
        if variant in nets or variant == "qekf":
            trace = run_day(day, geometry, regimes, variant, gain_net=nets.get(variant),
                            ekf_params=config.ekf, bandpass=t.bandpass,
                            boundary_window_steps=t.boundary_window_steps)
            estimates[variant] = trace.posterior_m
    for name in BASELINE_METHODS:
        estimates[name] = BASELINES[name](day, geometry)
    return estimates


def _evaluate(days: List[SimOutput], geometry: SectionGeometry, regimes: SpeedRegimes,
              nets: Mapping[str, GainNet], config: ExperimentConfig) -> List[EvaluatedDay]:
    evaluated = []
    for out in days:
        estimates = _estimates(out.day, geometry, regimes, nets, config)
        evaluated.append(EvaluatedDay(out.day.t0, np.asarray(out.day.ground_truth_m), estimates,
                                      out.day.label))
    return evaluated


def run_benchmark(config: Optional[ExperimentConfig] = None,
                  out_dir: Optional[Union[str, Path]] = None,
                  gain_net: Optional[GainNet] = None) -> BenchmarkResult:
    """
    运行完整对比实验并写出结果文件

    Args:
        config: 实验协议
        out_dir: 输出目录（缺省 QNET_OUTPUT_DIR / output）
        gain_net: 已训练的网络；给定时跳过 Q-Net 训练（消融仍按 config.ablation 训练）

    Returns:
        BenchmarkResult
    """
    config = config or ExperimentConfig()
    out = normalize_output_dir(out_dir) / "experiment"
    scenario = config.scenario
    peaks = config.peak_windows

    sims = simulate_days(scenario, config.seeds())
    n_train, n_val = config.train_days, config.validation_days
    train_sims, val_sims, test_sims = sims[:n_train], sims[n_train:n_train + n_val], sims[n_train + n_val:]
    train_days = [s.day for s in train_sims]
    val_days = [s.day for s in val_sims]
    regimes = fit_regimes(train_days, scenario.regimes)
    geometry = scenario.geometry
    logger.info("实验: 训练 %d 天 / 验证 %d 天 / 测试 %d 天, 路段 %s（%d 段）",
                len(train_days), len(val_days), len(test_sims), geometry.section_id, geometry.n_segments)

    if gain_net is None:
        train_result = train(train_days, val_days, geometry, regimes, config.train,
                             checkpoint_path=out / "qnet.json")
    else:
        train_result = TrainResult(net=gain_net)
    nets: Dict[str, GainNet] = {"qnet": train_result.net}
    ablation_result = None
    if config.ablation:
        ablation_cfg = replace(config.train, variant="qnet_no_u")
        ablation_result = train(train_days, val_days, geometry, regimes, ablation_cfg,
                                checkpoint_path=out / "qnet_no_u.json")
        nets["qnet_no_u"] = ablation_result.net

    evaluated = _evaluate(test_sims, geometry, regimes, nets, config)
    report = pooled_report(evaluated, peaks)
    improvement = improvement_rows(report, "qnet", COMPARISON_BASELINES)
    onset = {
        day.label: {
            method: onset_lags(day.truth, day.estimates[method], t0=day.t0, peaks=peaks)[ALL_DAY]
            for method in ("qnet", "osd")
        }
        for day in evaluated
    }

    transfer_report = None
    if config.transfer:
        transfer_scenario = replace(scenario, geometry=config.transfer_geometry(), dead_segments=())
        transfer_sims = simulate_days(transfer_scenario, [s.scenario.seed for s in test_sims])
        transfer_eval = _evaluate(transfer_sims, transfer_scenario.geometry, regimes,
                                  {"qnet": train_result.net}, config)
        transfer_report = pooled_report(transfer_eval, peaks)

    result = BenchmarkResult(report=report, improvement=improvement, onset=onset,
                             train_result=train_result, regimes=regimes,
                             ablation_result=ablation_result, transfer_report=transfer_report)
    result.outputs["report_csv"] = str(write_report_csv(report, out / "report.csv"))
    result.outputs["summary_json"] = str(write_report_json(report, out / "report.json", result.summary()))
    if transfer_report is not None:
        result.outputs["transfer_csv"] = str(write_report_csv(transfer_report, out / "transfer_report.csv"))
    if train_result.history:
        result.outputs["loss_curve"] = str(write_loss_curve(train_result, out / "loss_curve.csv"))
    save_json(out / "experiment_config.json", config.to_dict())
    logger.info("实验完成: Q-Net 全天 RMSE %.2f m, 相对 %s 提升 %.2f%%",
                report.get("qnet").rmse_m, improvement["baseline"], improvement["rmse_m"])
    return result
