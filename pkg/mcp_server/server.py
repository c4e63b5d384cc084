"""
MCP 服务器业务函数：仿真 / 速度状态拟合 / 排队长度估计 / 指标评估

提供四个工具（函数）：
- simulate_scenario: 按场景配置仿真若干天，写出 counts / afcd / truth CSV 与路段配置；
- fit_speed_regimes: 从 aFCD 速度直方图估计 v_free / v_jam；
- estimate_queue: 对一天数据运行 Q-Net / Q-Net 无控制输入 / Q-EKF，写出 estimate.csv；
- evaluate_estimates: 计算 RMSE / MAE / MAPE 报告（可加 OSD / ISC 对照）。

说明：
- 这里不绑定具体 MCP 传输实现，只提供「纯 Python 函数」，返回 {"ok": bool, "error": ..., ...}；
- 上层 mcp_server.py 负责把 ok=False 转成 ToolError。
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from baselines import BASELINES
from core.exceptions import QueueNetDataError, QueueNetNumericError
from core.io import (
    load_section_config,
    load_sensor_day,
    normalize_output_dir,
    read_afcd_csv,
    read_estimate_csv,
    read_start_time,
    read_truth_csv,
    save_json,
    save_section_config,
    write_estimate_csv,
    write_sensor_day,
)
from core.measurement import estimate_regimes
from estimator import LEARNED_VARIANTS, run_day
from evaluation import MetricsReport, compute_metrics, write_report_csv
from gainnet import GainNet
from simulator import ScenarioConfig, simulate_days

logger = logging.getLogger(__name__)


# ========== 通用配置 ==========

DEFAULT_SUBDIR = "mcp"


# ========== 辅助方法 ==========

def _output_dir(output_dir: Optional[str]) -> Path:
    return normalize_output_dir(output_dir) / DEFAULT_SUBDIR


def _failure(exc: Exception, **fields: Any) -> Dict[str, Any]:
    """把异常映射为带类别前缀的错误字符串"""
    if isinstance(exc, QueueNetDataError):
        kind = "data_error"
    elif isinstance(exc, QueueNetNumericError):
        kind = "numeric_error"
    else:
        kind = "unknown_error"
        logger.exception("未预期的异常")
    return {"ok": False, "error": f"{kind}: {exc}", **fields}


# ========== 工具函数 ==========

def simulate_scenario(
    scenario: Optional[Dict[str, Any]] = None,
    days: int = 1,
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
) -> Dict[str, Any]:
    """
    仿真若干天并写出传感器文件

    Args:
        scenario: ScenarioConfig.to_dict() 格式的场景配置；缺省为默认 5 段路段
        days: 连续仿真天数
        seed: 覆盖场景种子；第 i 天使用 seed + i
        output_dir: 输出根目录（缺省 QNET_OUTPUT_DIR / output），文件写到其下 mcp/

    Returns:
        {
            "ok": bool,
            "error": Optional[str],
            "section_path": Optional[str],
            "days": [{"label", "weekend", "counts", "afcd", "truth", "max_queue_m"}],
        }
    """
    try:
        config = ScenarioConfig.from_dict(scenario) if scenario else ScenarioConfig()
        if seed is not None:
            config = config.with_seed(seed)
        out = _output_dir(output_dir)
        sims = simulate_days(config, [config.seed + i for i in range(max(int(days), 1))])
        results: List[Dict[str, Any]] = []
        for sim in sims:
            paths = write_sensor_day(sim.day, out, sim.day.label)
            results.append({
                "label": sim.day.label,
                "weekend": sim.weekend,
                "max_queue_m": float(np.max(sim.day.ground_truth_m)),
                **paths,
            })
        section_path = save_section_config(out / "section.json", config.geometry, config.regimes)
        save_json(out / "scenario.json", config.to_dict())
        return {"ok": True, "error": None, "section_path": str(section_path), "days": results}
    except Exception as e:
        return _failure(e, section_path=None, days=[])


def fit_speed_regimes(
    afcd_paths: List[str],
    n_segments: Optional[int] = None,
    histogram_path: Optional[str] = None,
) -> Dict[str, Any]:
    """
    从一个或多个 afcd.csv 估计双状态速度

    Returns:
        {"ok": bool, "error": Optional[str], "regimes": Optional[{"v_free", "v_jam"}], "samples": int}
    """
    try:
        samples = np.concatenate([read_afcd_csv(p, n_segments)[1].ravel() for p in afcd_paths])
        regimes = estimate_regimes(samples, histogram_path=histogram_path)
        return {"ok": True, "error": None, "regimes": regimes.to_dict(),
                "samples": int(np.isfinite(samples).sum())}
    except Exception as e:
        return _failure(e, regimes=None, samples=0)


def estimate_queue(
    counts_path: str,
    afcd_path: str,
    section_path: str,
    variant: str = "qekf",
    checkpoint_path: Optional[str] = None,
    mode: str = "offline",
    output_path: Optional[str] = None,
) -> Dict[str, Any]:
    """
    对一天数据运行滤波器

    Args:
        variant: qnet / qnet_no_u / qekf；学习型变体需要 checkpoint_path
        mode: offline 或 online
        output_path: estimate.csv 路径（缺省写到 mcp/ 下）

    Returns:
        {"ok", "error", "estimate_path", "steps", "mean_posterior_m", "max_posterior_m"}
    """
    try:
        geometry, regimes = load_section_config(section_path)
        day = load_sensor_day(counts_path, afcd_path, n_segments=geometry.n_segments)
        if regimes is None:
            regimes = estimate_regimes(day.afcd_speeds)
        net = None
        if variant in LEARNED_VARIANTS:
            if not checkpoint_path:
                return {"ok": False, "error": f"config_error: {variant} 需要 checkpoint_path",
                        "estimate_path": None}
            net = GainNet.load(checkpoint_path)
        trace = run_day(day, geometry, regimes, variant, gain_net=net, mode=mode)
        path = Path(output_path) if output_path else _output_dir(None) / f"{day.label}_{variant}_estimate.csv"
        write_estimate_csv(trace, day.t0, path)
        return {
            "ok": True,
            "error": None,
            "estimate_path": str(path),
            "steps": trace.steps,
            "mean_posterior_m": float(np.mean(trace.posterior_m)),
            "max_posterior_m": float(np.max(trace.posterior_m)),
        }
    except Exception as e:
        return _failure(e, estimate_path=None)


def evaluate_estimates(
    truth_path: str,
    estimates: Dict[str, str],
    include_baselines: bool = False,
    counts_path: Optional[str] = None,
    afcd_path: Optional[str] = None,
    section_path: Optional[str] = None,
    report_path: Optional[str] = None,
) -> Dict[str, Any]:
    """
    计算指标报告

    Args:
        estimates: {方法名: estimate.csv 路径}
        include_baselines: 加入 OSD / ISC（需要 counts / afcd / section）

    Returns:
        {"ok", "error", "metrics": {方法: {时段: {rmse_m, mae_m, mape_pct, n_steps}}}, "report_path"}
    """
    try:
        truth = read_truth_csv(truth_path)
        t0 = read_start_time(truth_path)
        series = {name: read_estimate_csv(path) for name, path in (estimates or {}).items()}
        if include_baselines:
            if not (counts_path and afcd_path and section_path):
                return {"ok": False, "error": "config_error: 对照方法需要 counts_path / afcd_path / section_path",
                        "metrics": None, "report_path": None}
            geometry, _ = load_section_config(section_path)
            day = load_sensor_day(counts_path, afcd_path, n_segments=geometry.n_segments)
            for name, fn in BASELINES.items():
                series[name] = fn(day, geometry)[:truth.size]
        if not series:
            return {"ok": False, "error": "config_error: 没有可评估的估计序列",
                    "metrics": None, "report_path": None}
        report = MetricsReport()
        for name, values in series.items():
            compute_metrics(truth, values, t0, method=name, report=report)
        path = Path(report_path) if report_path else _output_dir(None) / "report.csv"
        write_report_csv(report, path)
        return {"ok": True, "error": None, "metrics": report.to_dict(), "report_path": str(path)}
    except Exception as e:
        return _failure(e, metrics=None, report_path=None)
