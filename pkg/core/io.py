"""
文件读写：CSV 时间序列与 JSON 配置

CSV 约定（UTF-8、表头、点号小数）：
- counts.csv:  t_iso,cum_inflow,cum_outflow          （10 s）
- afcd.csv:    t_iso,segment_index,speed_mps          （60 s，缺失为空字段）
- truth.csv:   t_iso,queue_m                          （10 s）
- control.csv: t_iso,u_m,q_reconstructed_m
- estimate.csv: t_iso,prior_m,posterior_m
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .control import ControlSeries
from .exceptions import AlignmentError, ConfigError, QueueNetDataError
from .models import (
    BASE_STEP_S,
    FilterTrace,
    SectionGeometry,
    SensorDay,
    SpeedRegimes,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# ========== 通用配置 ==========
OUTPUT_DIR_ENV = "QNET_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "output"

COUNTS_COLUMNS = ["t_iso", "cum_inflow", "cum_outflow"]
AFCD_COLUMNS = ["t_iso", "segment_index", "speed_mps"]
TRUTH_COLUMNS = ["t_iso", "queue_m"]
CONTROL_COLUMNS = ["t_iso", "u_m", "q_reconstructed_m"]
ESTIMATE_COLUMNS = ["t_iso", "prior_m", "posterior_m"]


def normalize_output_dir(output_dir: Optional[PathLike] = None) -> Path:
    """
    规范化输出目录

    未指定时依次使用环境变量 QNET_OUTPUT_DIR、默认 output/；
    相对路径相对于当前工作目录解析。
    """
    if not output_dir:
        output_dir = os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR
    path = Path(output_dir)
    if path.is_absolute():
        return path.resolve()
    return Path.cwd() / path


def _ensure_parent(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _read_csv(path: PathLike, columns: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise QueueNetDataError(f"文件不存在: {path}")
    frame = pd.read_csv(path, encoding="utf-8")
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise QueueNetDataError(f"{path.name} 缺少列: {missing}（应为 {list(columns)}）")
    return frame


def _parse_times(frame: pd.DataFrame) -> pd.Series:
    try:
        return pd.to_datetime(frame["t_iso"])
    except (ValueError, TypeError) as exc:
        raise QueueNetDataError(f"无法解析 t_iso 列: {exc}") from exc


def _iso(stamps: Sequence[datetime]) -> List[str]:
    return [stamp.isoformat(timespec="seconds") for stamp in stamps]


def _timeline(t0: datetime, steps: int, step_s: int = BASE_STEP_S) -> List[str]:
    return _iso([t0 + timedelta(seconds=step_s * k) for k in range(steps)])


# ========== JSON ==========

def load_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"配置文件不存在: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"配置文件不是合法 JSON: {path}: {exc}") from exc


def save_json(path: PathLike, data: Dict[str, Any]) -> Path:
    path = _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, ensure_ascii=False, indent=2)
    return path


def section_from_dict(data: Dict[str, Any]) -> Tuple[SectionGeometry, Optional[SpeedRegimes]]:
    """
    解析路段配置

    支持显式 segments 列表，或 n_segments（等长切分）；
    可选 v_free / v_jam 覆盖经验估计的速度状态。
    """
    payload = dict(data)
    if "segments" not in payload and "n_segments" in payload:
        geometry = SectionGeometry.uniform(
            str(payload.get("section_id", "section")),
            payload["length_m"], payload["lanes"], int(payload["n_segments"]),
            payload.get("q_max_m"),
        )
    else:
        geometry = SectionGeometry.from_dict(payload)
    regimes = None
    if "v_free" in payload and "v_jam" in payload:
        regimes = SpeedRegimes.from_dict(payload)
    return geometry, regimes


def load_section_config(path: PathLike) -> Tuple[SectionGeometry, Optional[SpeedRegimes]]:
    return section_from_dict(load_json(path))


def save_section_config(path: PathLike, geometry: SectionGeometry,
                        regimes: Optional[SpeedRegimes] = None) -> Path:
    data = geometry.to_dict()
    if regimes is not None:
        data.update(regimes.to_dict())
    return save_json(path, data)


# ========== CSV 读取 ==========

def read_counts_csv(path: PathLike) -> Tuple[datetime, np.ndarray, np.ndarray]:
    """返回 (t0, A_t, D_t)"""
    frame = _read_csv(path, COUNTS_COLUMNS)
    if frame.empty:
        raise QueueNetDataError(f"计数文件为空: {path}")
    times = _parse_times(frame)
    return (times.iloc[0].to_pydatetime(),
            frame["cum_inflow"].to_numpy(dtype=float),
            frame["cum_outflow"].to_numpy(dtype=float))


def read_afcd_csv(path: PathLike, n_segments: Optional[int] = None) -> Tuple[datetime, np.ndarray]:
    """
    读取长表 aFCD 并透视为 (N, T60) 矩阵；缺失速度为 NaN

    Args:
        n_segments: 期望的分段数；给定时校验 segment_index 范围
    """
    frame = _read_csv(path, AFCD_COLUMNS)
    if frame.empty:
        raise QueueNetDataError(f"aFCD 文件为空: {path}")
    frame["t_iso"] = _parse_times(frame)
    frame["speed_mps"] = pd.to_numeric(frame["speed_mps"], errors="coerce")
    try:
        table = frame.pivot(index="segment_index", columns="t_iso", values="speed_mps")
    except ValueError as exc:
        raise AlignmentError(f"aFCD 中存在重复的 (t_iso, segment_index): {exc}") from exc
    count = n_segments if n_segments is not None else int(frame["segment_index"].max()) + 1
    if frame["segment_index"].min() < 0 or frame["segment_index"].max() >= count:
        raise AlignmentError(f"segment_index 超出范围 [0, {count})")
    table = table.reindex(index=range(count))
    times = table.columns.sort_values()
    return times[0].to_pydatetime(), table[times].to_numpy(dtype=float)


def read_truth_csv(path: PathLike) -> np.ndarray:
    return _read_csv(path, TRUTH_COLUMNS)["queue_m"].to_numpy(dtype=float)


def read_estimate_csv(path: PathLike, column: str = "posterior_m") -> np.ndarray:
    """读取估计序列；也接受 truth 格式（queue_m 列）"""
    frame = pd.read_csv(Path(path), encoding="utf-8")
    for name in (column, "queue_m"):
        if name in frame.columns:
            return frame[name].to_numpy(dtype=float)
    raise QueueNetDataError(f"{Path(path).name} 中没有 {column} 或 queue_m 列")


def read_start_time(path: PathLike) -> datetime:
    """任一 10 s 序列文件（truth / estimate / counts）第一行的时刻"""
    frame = _read_csv(path, ["t_iso"])
    if frame.empty:
        raise QueueNetDataError(f"文件为空: {path}")
    return _parse_times(frame.head(1)).iloc[0].to_pydatetime()


def load_sensor_day(counts_path: PathLike, afcd_path: PathLike,
                    truth_path: Optional[PathLike] = None, n_segments: Optional[int] = None,
                    label: str = "") -> SensorDay:
    """
    组装一天的 SensorDay，并截断到完整的 60 s 区间

    Raises:
        AlignmentError: 计数与 aFCD 起点不一致或长度不匹配
    """
    t0, inflow, outflow = read_counts_csv(counts_path)
    afcd_t0, afcd = read_afcd_csv(afcd_path, n_segments)
    if afcd_t0 != t0:
        raise AlignmentError(f"计数起点 {t0} 与 aFCD 起点 {afcd_t0} 不一致")
    truth = read_truth_csv(truth_path) if truth_path else None
    day = SensorDay(t0=t0, cum_inflow=inflow, cum_outflow=outflow, afcd_speeds=afcd,
                    ground_truth_m=truth, label=label or Path(counts_path).stem)
    return day.truncated()


# ========== CSV 写出 ==========

def write_counts_csv(day: SensorDay, path: PathLike) -> Path:
    path = _ensure_parent(path)
    pd.DataFrame({
        "t_iso": _timeline(day.t0, day.steps, day.step_s),
        "cum_inflow": day.cum_inflow.astype(int),
        "cum_outflow": day.cum_outflow.astype(int),
    }).to_csv(path, index=False, encoding="utf-8")
    return path


def write_afcd_csv(day: SensorDay, path: PathLike) -> Path:
    path = _ensure_parent(path)
    stamps = _iso(day.afcd_timestamps())
    rows = []
    for k, stamp in enumerate(stamps):
        for i in range(day.n_segments):
            rows.append((stamp, i, day.afcd_speeds[i, k]))
    frame = pd.DataFrame(rows, columns=AFCD_COLUMNS)
    frame.to_csv(path, index=False, encoding="utf-8", float_format="%.6f", na_rep="")
    return path


def write_truth_csv(day: SensorDay, path: PathLike) -> Path:
    if day.ground_truth_m is None:
        raise QueueNetDataError("该日没有真值排队长度")
    path = _ensure_parent(path)
    pd.DataFrame({
        "t_iso": _timeline(day.t0, day.steps, day.step_s),
        "queue_m": day.ground_truth_m,
    }).to_csv(path, index=False, encoding="utf-8", float_format="%.6f")
    return path


def write_control_csv(control: ControlSeries, t0: datetime, path: PathLike,
                      step_s: int = BASE_STEP_S) -> Path:
    path = _ensure_parent(path)
    pd.DataFrame({
        "t_iso": _timeline(t0, control.steps, step_s),
        "u_m": control.u,
        "q_reconstructed_m": control.reconstructed_q,
    }).to_csv(path, index=False, encoding="utf-8", float_format="%.9f")
    return path


def write_estimate_csv(trace: FilterTrace, t0: datetime, path: PathLike,
                       step_s: int = BASE_STEP_S) -> Path:
    path = _ensure_parent(path)
    pd.DataFrame({
        "t_iso": _timeline(t0, trace.steps, step_s),
        "prior_m": trace.prior_m,
        "posterior_m": trace.posterior_m,
    }).to_csv(path, index=False, encoding="utf-8", float_format="%.9f")
    return path


def write_trace_json(trace: FilterTrace, path: PathLike) -> Path:
    """完整滤波轨迹（含预测速度、增益、控制输入、方差）"""
    data: Dict[str, Any] = {
        "variant": trace.variant,
        "prior_m": trace.prior_m.tolist(),
        "posterior_m": trace.posterior_m.tolist(),
        "predicted_speeds": np.asarray(trace.predicted_speeds).tolist(),
        "gains": [np.asarray(g).tolist() for g in trace.gains],
    }
    if trace.control_u is not None:
        data["control_u"] = trace.control_u.tolist()
    if trace.variances is not None:
        data["variances"] = trace.variances.tolist()
    return save_json(path, data)


def write_sensor_day(day: SensorDay, out_dir: PathLike, prefix: str = "") -> Dict[str, str]:
    """写出 counts / afcd /（可选）truth 三个 CSV，返回路径字典"""
    out = Path(out_dir)
    stem = f"{prefix}_" if prefix else ""
    paths = {
        "counts": str(write_counts_csv(day, out / f"{stem}counts.csv")),
        "afcd": str(write_afcd_csv(day, out / f"{stem}afcd.csv")),
    }
    if day.ground_truth_m is not None:
        paths["truth"] = str(write_truth_csv(day, out / f"{stem}truth.csv"))
    logger.info("已写出 %s: %s", day.label or "sensor day", ", ".join(paths.values()))
    return paths


# ========== 训练清单 ==========

@dataclass
class DayFiles:
    """清单中的一天：三个 CSV 路径与可选的工作日 / 周末标签"""
    counts: Path
    afcd: Path
    truth: Optional[Path] = None
    label: str = ""
    weekend: Optional[bool] = None

    def load(self, n_segments: Optional[int] = None) -> SensorDay:
        return load_sensor_day(self.counts, self.afcd, self.truth, n_segments, self.label)


@dataclass
class Manifest:
    section: Path
    train: List[DayFiles] = field(default_factory=list)
    validation: List[DayFiles] = field(default_factory=list)
    test: List[DayFiles] = field(default_factory=list)


def load_manifest(path: PathLike) -> Manifest:
    """
    读取训练清单 JSON：

    {"section": "section.json",
     "train": [{"counts": ..., "afcd": ..., "truth": ..., "label": ..., "weekend": false}, ...],
     "validation": [...], "test": [...]}

    相对路径相对于清单文件所在目录解析。
    """
    path = Path(path)
    data = load_json(path)
    base = path.parent

    def resolve(value: Optional[str]) -> Optional[Path]:
        if not value:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    def days(key: str) -> List[DayFiles]:
        entries = data.get(key) or []
        result = []
        for entry in entries:
            if "counts" not in entry or "afcd" not in entry:
                raise ConfigError(f"清单 {key} 中的条目缺少 counts / afcd: {entry}")
            result.append(DayFiles(
                counts=resolve(entry["counts"]),
                afcd=resolve(entry["afcd"]),
                truth=resolve(entry.get("truth")),
                label=str(entry.get("label", Path(entry["counts"]).stem)),
                weekend=entry.get("weekend"),
            ))
        return result

    if "section" not in data:
        raise ConfigError("清单缺少 section 字段")
    return Manifest(section=resolve(data["section"]), train=days("train"),
                    validation=days("validation"), test=days("test"))


def save_manifest(path: PathLike, manifest: Manifest) -> Path:
    def entry(day: DayFiles) -> Dict[str, Any]:
        item: Dict[str, Any] = {"counts": str(day.counts), "afcd": str(day.afcd), "label": day.label}
        if day.truth is not None:
            item["truth"] = str(day.truth)
        if day.weekend is not None:
            item["weekend"] = day.weekend
        return item

    return save_json(path, {
        "section": str(manifest.section),
        "train": [entry(d) for d in manifest.train],
        "validation": [entry(d) for d in manifest.validation],
        "test": [entry(d) for d in manifest.test],
    })
