"""
realtime 子命令：按到达顺序逐行读取 counts / aFCD，每 10 s 输出一个后验

读取是惰性的：计数逐行消费，凑满一个 60 s 区间后再消费对应区间的 aFCD 行。
"""
from __future__ import annotations

import logging
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from core.exceptions import AlignmentError, QueueNetDataError
from core.io import AFCD_COLUMNS, COUNTS_COLUMNS
from core.models import FilterTrace, STEPS_PER_AFCD
from estimator import StreamingEstimator

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
StepCallback = Callable[[datetime, float, float], None]
CountsRow = Tuple[datetime, float, float]


def _open(path: PathLike, chunksize: int):
    path = Path(path)
    if not path.exists():
        raise QueueNetDataError(f"文件不存在: {path}")
    reader = pd.read_csv(path, encoding="utf-8", chunksize=chunksize)
    return path, reader


def _check_columns(path: Path, chunk: pd.DataFrame, columns) -> None:
    missing = [c for c in columns if c not in chunk.columns]
    if missing:
        raise QueueNetDataError(f"{path.name} 缺少列: {missing}（应为 {list(columns)}）")


def iter_counts(path: PathLike) -> Iterator[CountsRow]:
    """逐行产出 (t, A_t, D_t)"""
    path, reader = _open(path, 1)
    with reader:
        for chunk in reader:
            _check_columns(path, chunk, COUNTS_COLUMNS)
            row = chunk.iloc[0]
            yield (pd.Timestamp(row["t_iso"]).to_pydatetime(),
                   float(row["cum_inflow"]), float(row["cum_outflow"]))


def iter_afcd(path: PathLike, n_segments: int) -> Iterator[Tuple[datetime, np.ndarray]]:
    """
    逐区间产出 (区间起点, 分段速度向量)

    每个区间必须恰好有 n_segments 行（缺失速度写为空字段），与 afcd.csv 的写出格式一致。
    """
    path, reader = _open(path, n_segments)
    with reader:
        for chunk in reader:
            _check_columns(path, chunk, AFCD_COLUMNS)
            stamps = pd.to_datetime(chunk["t_iso"]).unique()
            if len(chunk) != n_segments or len(stamps) != 1:
                raise AlignmentError(f"aFCD 每个区间必须恰好有 {n_segments} 行，且时刻相同")
            index = chunk["segment_index"].to_numpy(dtype=int)
            if index.min() < 0 or index.max() >= n_segments:
                raise AlignmentError(f"segment_index 超出范围 [0, {n_segments})")
            speeds = np.full(n_segments, np.nan)
            speeds[index] = pd.to_numeric(chunk["speed_mps"], errors="coerce").to_numpy(dtype=float)
            yield pd.Timestamp(stamps[0]).to_pydatetime(), speeds


def _push_interval(estimator: StreamingEstimator, rows: List[CountsRow], afcd: np.ndarray,
                   on_step: Optional[StepCallback]) -> None:
    for i, (stamp, cum_in, cum_out) in enumerate(rows):
        record = estimator.push(cum_in, cum_out, afcd if i == 0 else None)
        if on_step is not None:
            on_step(stamp, record.x_prior, record.x_post)


def run_realtime(
    estimator: StreamingEstimator,
    counts_path: PathLike,
    afcd_path: PathLike,
    n_segments: int,
    on_step: Optional[StepCallback] = None,
) -> Tuple[Optional[datetime], FilterTrace]:
    """
    流式运行一天

    计数按 60 s 区间成组推进：凑齐一个区间的 6 行且对应 aFCD 区间已到达时才处理该区间。
    末尾不完整的区间、以及 aFCD 结束后的计数都被丢弃，与批量读取的截断规则一致。

    Args:
        estimator: 在线模式的流式估计器
        on_step: 每步回调 (t, prior_m, posterior_m)

    Returns:
        (第 0 步时刻, FilterTrace)

    Raises:
        AlignmentError: aFCD 区间时刻与计数步不一致
    """
    intervals = iter_afcd(afcd_path, n_segments)
    t0: Optional[datetime] = None
    pending: List[CountsRow] = []
    for row in iter_counts(counts_path):
        t0 = t0 or row[0]
        pending.append(row)
        if len(pending) < STEPS_PER_AFCD:
            continue
        interval = next(intervals, None)
        if interval is None:
            logger.warning("aFCD 在第 %d 步结束，忽略其后的计数", estimator.steps)
            pending = []
            break
        if interval[0] != pending[0][0]:
            raise AlignmentError(
                f"第 {estimator.steps} 步: aFCD 区间 {interval[0]} 与计数时刻 {pending[0][0]} 不一致"
            )
        _push_interval(estimator, pending, interval[1], on_step)
        pending = []
    if pending:
        logger.warning("丢弃末尾不完整区间的 %d 行计数", len(pending))
    logger.info("realtime 完成: %d 步", estimator.steps)
    return t0, estimator.trace()
