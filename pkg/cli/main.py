"""
qnet 命令行入口

子命令：
- simulate:       场景配置 → counts.csv / afcd.csv / truth.csv / scenario.json / section.json / manifest.json
- fit-regimes:    aFCD 速度直方图 → v_free / v_jam
- derive-control: counts.csv → control.csv
- train:          训练清单 → 检查点 + metrics.csv
- estimate:       单日批量估计 → estimate.csv（可选完整轨迹 JSON）
- evaluate:       真值 + 估计 → 指标报告 CSV / JSON（可选 OSD / ISC 对照与逐步误差）
- realtime:       按到达顺序流式估计，每 10 s 输出一行
- experiment:     仿真数据上的完整对比实验

退出码：0 成功，2 参数错误，3 数据错误，4 数值错误。
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from baselines import BASELINES
from core.control import CONTROL_MODES, DEFAULT_BAND, DEFAULT_BOUNDARY_WINDOW_STEPS, derive_control
from core.exceptions import (
    ConfigError,
    QueueNetDataError,
    QueueNetNumericError,
    TrainingDivergedError,
)
from core.io import (
    DayFiles,
    Manifest,
    load_json,
    load_manifest,
    load_section_config,
    load_sensor_day,
    normalize_output_dir,
    read_afcd_csv,
    read_counts_csv,
    read_estimate_csv,
    read_start_time,
    read_truth_csv,
    save_json,
    save_manifest,
    save_section_config,
    write_control_csv,
    write_estimate_csv,
    write_sensor_day,
    write_trace_json,
)
from core.measurement import estimate_regimes
from core.models import STEPS_PER_AFCD, SensorDay, SpeedRegimes
from estimator import LEARNED_VARIANTS, VARIANTS, EkfParams, StreamingEstimator, run_day
from evaluation import (
    ExperimentConfig,
    MetricsReport,
    compute_metrics,
    per_step_errors,
    render_report,
    run_benchmark,
    write_errors_csv,
    write_report_csv,
    write_report_json,
)
from gainnet import GainNet, GainNetConfig
from simulator import ScenarioConfig, simulate_days
from training import TrainConfig, split_days, train, write_loss_curve
from .realtime import run_realtime

logger = logging.getLogger("qnet")

LOG_LEVEL_ENV = "QNET_LOG_LEVEL"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def configure_logging(verbose: bool = False) -> None:
    """日志写到 UTF-8 stderr，stdout 只留给数据输出"""
    level_name = "DEBUG" if verbose else os.getenv(LOG_LEVEL_ENV, "INFO").upper()
    if isinstance(sys.stderr, io.TextIOWrapper):
        sys.stderr.reconfigure(encoding="utf-8", errors="replace", line_buffering=True)
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format="[%(asctime)s] [%(name)s] [%(levelname)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stderr,
        force=True,
    )


# ========== 参数解析辅助 ==========

def _band(text: str) -> Tuple[float, float]:
    try:
        low, high = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"带通应为 low,high（Hz）: {text}") from exc
    return low, high


def _named_path(text: str) -> Tuple[str, Path]:
    """NAME=PATH 或 PATH（名称取文件名）"""
    if "=" in text:
        name, path = text.split("=", 1)
        return name, Path(path)
    return Path(text).stem, Path(text)


def _output_path(args: argparse.Namespace, value: Optional[str], default_name: str) -> Path:
    if value:
        return Path(value)
    return normalize_output_dir(args.output_dir) / default_name


def _regimes_from_afcd(speeds: np.ndarray, fallback: Optional[SpeedRegimes]) -> SpeedRegimes:
    if fallback is not None:
        return fallback
    regimes = estimate_regimes(speeds)
    logger.warning("路段配置未给出速度状态，使用当前数据拟合的 v_free=%.2f, v_jam=%.2f",
                   regimes.v_free, regimes.v_jam)
    return regimes


def _gain_net(variant: str, checkpoint: Optional[str]) -> Optional[GainNet]:
    if variant not in LEARNED_VARIANTS:
        return None
    if not checkpoint:
        raise ConfigError(f"{variant} 需要 --checkpoint")
    return GainNet.load(checkpoint)


def _ekf_params(path: Optional[str]) -> EkfParams:
    return EkfParams.from_dict(load_json(path)) if path else EkfParams()


# ========== 子命令 ==========

def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = ScenarioConfig.from_dict(load_json(args.scenario)) if args.scenario else ScenarioConfig()
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    if args.days < 1 or args.test_days < 0 or args.validation_days < 0 \
            or args.test_days + args.validation_days >= args.days:
        raise ConfigError(f"天数设置无效: days={args.days}, validation={args.validation_days}, "
                          f"test={args.test_days}")
    out = _output_path(args, args.out, "simulate")
    sims = simulate_days(scenario, [scenario.seed + i for i in range(args.days)])

    entries: List[DayFiles] = []
    for sim in sims:
        prefix = sim.day.label if args.days > 1 else ""
        paths = write_sensor_day(sim.day, out, prefix)
        entries.append(DayFiles(counts=Path(paths["counts"]).relative_to(out),
                                afcd=Path(paths["afcd"]).relative_to(out),
                                truth=Path(paths["truth"]).relative_to(out),
                                label=sim.day.label, weekend=sim.weekend))
    save_json(out / "scenario.json", scenario.to_dict())
    save_section_config(out / "section.json", scenario.geometry, scenario.regimes)
    n_train = args.days - args.validation_days - args.test_days
    manifest = Manifest(section=Path("section.json"), train=entries[:n_train],
                        validation=entries[n_train:n_train + args.validation_days],
                        test=entries[n_train + args.validation_days:])
    save_manifest(out / "manifest.json", manifest)
    logger.info("仿真完成: %d 天 → %s", len(sims), out)
    return EXIT_OK


def cmd_fit_regimes(args: argparse.Namespace) -> int:
    n_segments = None
    geometry = None
    if args.section:
        geometry, _ = load_section_config(args.section)
        n_segments = geometry.n_segments
    samples = np.concatenate([read_afcd_csv(path, n_segments)[1].ravel() for path in args.afcd])
    regimes = estimate_regimes(samples, histogram_path=args.histogram)
    print(json.dumps(regimes.to_dict(), ensure_ascii=False))
    if args.out:
        if geometry is None:
            save_json(args.out, regimes.to_dict())
        else:
            save_section_config(args.out, geometry, regimes)
        logger.info("已写出速度状态: %s", args.out)
    return EXIT_OK


def cmd_derive_control(args: argparse.Namespace) -> int:
    geometry, _ = load_section_config(args.section)
    t0, inflow, outflow = read_counts_csv(args.counts)
    n_intervals = -(-inflow.size // STEPS_PER_AFCD)
    counts = SensorDay(t0, inflow, outflow, np.full((geometry.n_segments, n_intervals), np.nan))
    control = derive_control(counts, geometry, args.mode, args.band, args.boundary_window,
                             lambda_c=args.lambda_c)
    path = write_control_csv(control, t0, _output_path(args, args.out, "control.csv"))
    logger.info("已写出控制输入: %s", path)
    return EXIT_OK


def _train_days(manifest: Manifest, n_segments: int, args: argparse.Namespace):
    train_days = [d.load(n_segments) for d in manifest.train]
    val_days = [d.load(n_segments) for d in manifest.validation]
    if not args.split:
        return train_days, val_days
    entries = manifest.train + manifest.validation + manifest.test
    days = train_days + val_days + [d.load(n_segments) for d in manifest.test]
    weekend = [bool(d.weekend) for d in entries] if all(d.weekend is not None for d in entries) else None
    split = split_days(days, weekend, args.validation_fraction, args.test_fraction, args.seed or 0)
    return split.train, split.validation


def cmd_train(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    geometry, regimes = load_section_config(str(manifest.section))
    train_days, val_days = _train_days(manifest, geometry.n_segments, args)

    overrides = load_json(args.config) if args.config else {}
    for key in ("epochs", "lr", "seed", "window_steps", "variant"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.time_budget is not None:
        overrides["time_budget_s"] = args.time_budget
    config = TrainConfig.from_dict(overrides)
    gain_config = GainNetConfig.from_dict(load_json(args.gain_config)) if args.gain_config else None

    checkpoint = _output_path(args, args.out, f"{config.variant}.json")
    if regimes is None:
        regimes = estimate_regimes(np.concatenate([d.afcd_speeds.ravel() for d in train_days]))
        section_out = checkpoint.with_name("section.json")
        save_section_config(section_out, geometry, regimes)
        logger.info("已拟合速度状态并写出路段配置: %s", section_out)

    result = train(train_days, val_days, geometry, regimes, config, gain_config,
                   checkpoint_path=checkpoint)
    metrics = Path(args.metrics) if args.metrics else checkpoint.with_name("metrics.csv")
    write_loss_curve(result, metrics)
    logger.info("训练结束: 最优 epoch %d, RMSE %.3f m, 检查点 %s",
                result.best_epoch, result.best_val_rmse, result.checkpoint)
    if result.diverged:
        raise TrainingDivergedError(f"训练发散，已保存最后一个良好检查点: {result.checkpoint}")
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    geometry, regimes = load_section_config(args.section)
    day = load_sensor_day(args.counts, args.afcd, n_segments=geometry.n_segments)
    regimes = _regimes_from_afcd(day.afcd_speeds, regimes)
    trace = run_day(day, geometry, regimes, args.variant,
                    gain_net=_gain_net(args.variant, args.checkpoint),
                    ekf_params=_ekf_params(args.ekf), mode=args.mode,
                    bandpass=args.band, boundary_window_steps=args.boundary_window)
    path = write_estimate_csv(trace, day.t0, _output_path(args, args.out, "estimate.csv"))
    if args.trace:
        write_trace_json(trace, args.trace)
    logger.info("已写出估计: %s", path)
    return EXIT_OK


def cmd_realtime(args: argparse.Namespace) -> int:
    geometry, regimes = load_section_config(args.section)
    if regimes is None:
        raise ConfigError("realtime 需要路段配置中给出 v_free / v_jam（不能从未来数据拟合）")
    estimator = StreamingEstimator(geometry, regimes, args.variant,
                                   gain_net=_gain_net(args.variant, args.checkpoint),
                                   ekf_params=_ekf_params(args.ekf), bandpass=args.band,
                                   boundary_window_steps=args.boundary_window)

    def emit(stamp, prior, posterior):
        print(f"{stamp.isoformat(timespec='seconds')},{prior:.9f},{posterior:.9f}", flush=True)

    if not args.quiet:
        print("t_iso,prior_m,posterior_m", flush=True)
    t0, trace = run_realtime(estimator, args.counts, args.afcd, geometry.n_segments,
                             on_step=None if args.quiet else emit)
    if t0 is None:
        raise QueueNetDataError(f"计数文件为空: {args.counts}")
    if args.out:
        write_estimate_csv(trace, t0, args.out)
        logger.info("已写出估计: %s", args.out)
    return EXIT_OK


def _baseline_estimates(args: argparse.Namespace, steps: int) -> Dict[str, np.ndarray]:
    if not (args.counts and args.afcd and args.section):
        raise ConfigError("--baselines 需要 --counts、--afcd 与 --section")
    geometry, _ = load_section_config(args.section)
    day = load_sensor_day(args.counts, args.afcd, n_segments=geometry.n_segments)
    estimates = {name: fn(day, geometry) for name, fn in BASELINES.items()}
    return {name: values[:steps] for name, values in estimates.items()}


def cmd_evaluate(args: argparse.Namespace) -> int:
    truth = read_truth_csv(args.truth)
    t0 = read_start_time(args.truth)
    estimates: Dict[str, np.ndarray] = {}
    for text in args.estimate:
        name, path = _named_path(text)
        estimates[name] = read_estimate_csv(path)
    if args.baselines:
        estimates.update(_baseline_estimates(args, truth.size))
    if not estimates:
        raise ConfigError("至少需要一个 --estimate 或 --baselines")

    report = MetricsReport()
    for name, estimate in estimates.items():
        compute_metrics(truth, estimate, t0, method=name, report=report)
    out = _output_path(args, args.out, "report.csv")
    write_report_csv(report, out)
    write_report_json(report, out.with_suffix(".json"))
    if args.errors:
        write_errors_csv(per_step_errors(t0, truth, estimates, label=Path(args.truth).stem), args.errors)
    if not args.quiet:
        render_report(report)
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    data = load_json(args.config) if args.config else {}
    for key in ("train_days", "validation_days", "test_days", "seed"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    for key, value in (("epochs", args.epochs), ("time_budget_s", args.time_budget)):
        if value is not None:
            data["train"] = {**data.get("train", {}), key: value}
    config = ExperimentConfig.from_dict(data)
    gain_net = GainNet.load(args.checkpoint) if args.checkpoint else None
    result = run_benchmark(config, out_dir=args.output_dir, gain_net=gain_net)
    if not args.quiet:
        render_report(result.report, title="对比实验（测试日合并）")
    print(json.dumps(result.summary(), ensure_ascii=False, indent=2))
    if result.train_result.diverged:
        raise TrainingDivergedError("Q-Net 训练发散，结果基于最后一个良好检查点")
    return EXIT_OK


# ========== 解析器 ==========

def _add_filter_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--counts", required=True, help="counts.csv")
    p.add_argument("--afcd", required=True, help="afcd.csv")
    p.add_argument("--section", required=True, help="路段配置 JSON")
    p.add_argument("--variant", choices=VARIANTS, default="qnet")
    p.add_argument("--checkpoint", help="增益网络检查点（学习型变体必填）")
    p.add_argument("--ekf", help="Q-EKF 噪声参数 JSON")
    p.add_argument("--band", type=_band, default=DEFAULT_BAND, help="带通 low,high（Hz）")
    p.add_argument("--boundary-window", type=int, default=DEFAULT_BOUNDARY_WINDOW_STEPS,
                   help="λ_c 回归的边界窗口步数")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qnet", description="信号交叉口排队长度估计")
    parser.add_argument("-v", "--verbose", action="store_true", help="DEBUG 日志")
    parser.add_argument("--output-dir", default=None, help="输出目录（缺省 QNET_OUTPUT_DIR / output）")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="仿真多天传感器数据与真值")
    p.add_argument("--scenario", help="场景配置 JSON（缺省为默认 5 段路段）")
    p.add_argument("--days", type=int, default=1)
    p.add_argument("--validation-days", type=int, default=0)
    p.add_argument("--test-days", type=int, default=0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="输出目录")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-regimes", help="从 aFCD 直方图估计 v_free / v_jam")
    p.add_argument("--afcd", nargs="+", required=True)
    p.add_argument("--section", help="路段配置；给定时 --out 写出带速度状态的路段配置")
    p.add_argument("--histogram", help="直方图 CSV 输出路径")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit_regimes)

    p = sub.add_parser("derive-control", help="由累积计数推导控制输入")
    p.add_argument("--counts", required=True)
    p.add_argument("--section", required=True)
    p.add_argument("--mode", choices=CONTROL_MODES, default="offline")
    p.add_argument("--band", type=_band, default=DEFAULT_BAND)
    p.add_argument("--boundary-window", type=int, default=DEFAULT_BOUNDARY_WINDOW_STEPS)
    p.add_argument("--lambda-c", type=float, help="直接给定 λ_c（veh/s，仅离线）")
    p.add_argument("--out")
    p.set_defaults(func=cmd_derive_control)

    p = sub.add_parser("train", help="训练增益网络")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="TrainConfig JSON")
    p.add_argument("--gain-config", help="GainNetConfig JSON")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--window-steps", type=int)
    p.add_argument("--variant", choices=LEARNED_VARIANTS)
    p.add_argument("--time-budget", type=float, help="训练墙钟预算（秒）")
    p.add_argument("--split", action="store_true", help="忽略清单划分，按工作日 / 周末平衡随机划分")
    p.add_argument("--validation-fraction", type=float, default=0.2)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--out", help="检查点路径")
    p.add_argument("--metrics", help="逐 epoch 的 metrics.csv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("estimate", help="单日批量估计")
    _add_filter_options(p)
    p.add_argument("--mode", choices=CONTROL_MODES, default="offline")
    p.add_argument("--out")
    p.add_argument("--trace", help="完整轨迹 JSON")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="计算指标报告")
    p.add_argument("--truth", required=True)
    p.add_argument("--estimate", action="append", default=[], help="NAME=PATH，可重复")
    p.add_argument("--baselines", action="store_true", help="加入 OSD / ISC 对照")
    p.add_argument("--counts")
    p.add_argument("--afcd")
    p.add_argument("--section")
    p.add_argument("--errors", help="逐步绝对误差 CSV")
    p.add_argument("--out", help="报告 CSV（同名 .json 一并写出）")
    p.add_argument("-q", "--quiet", action="store_true", help="不打印表格")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("realtime", help="流式估计（在线模式）")
    _add_filter_options(p)
    p.add_argument("--out", help="结束时写出 estimate.csv")
    p.add_argument("-q", "--quiet", action="store_true", help="不向 stdout 逐步输出")
    p.set_defaults(func=cmd_realtime)

    p = sub.add_parser("experiment", help="仿真数据上的完整对比实验")
    p.add_argument("--config", help="ExperimentConfig JSON")
    p.add_argument("--train-days", type=int)
    p.add_argument("--validation-days", type=int)
    p.add_argument("--test-days", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--time-budget", type=float, help="每次训练的墙钟预算（秒），缺省 540")
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint", help="跳过 Q-Net 训练，直接使用该检查点")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    configure_logging(args.verbose)
    try:
        return args.func(args)
    except QueueNetDataError as exc:
        logger.error("数据错误: %s", exc)
        return EXIT_DATA
    except QueueNetNumericError as exc:
        logger.error("数值错误: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
