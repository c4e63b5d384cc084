"""
指标报告输出：CSV / JSON 文件与终端表格（rich）
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Iterable, Optional, Union

from rich.console import Console
from rich.table import Table

from core.io import save_json
from .metrics import ALL_DAY, METRIC_NAMES, MetricsReport, improvement, is_undefined

logger = logging.getLogger(__name__)

MAPE_UNDEFINED = "n/a"
_HEADERS = {"rmse_m": "RMSE (m)", "mae_m": "MAE (m)", "mape_pct": "MAPE (%)"}


def _fmt(value: Optional[float]) -> str:
    return MAPE_UNDEFINED if is_undefined(value) else f"{value:.2f}"


def write_report_csv(report: MetricsReport, path: Union[str, Path]) -> Path:
    """每行一个 (方法, 时段)；未定义的 MAPE 写为空"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report.to_frame().to_csv(path, index=False, encoding="utf-8", float_format="%.4f")
    logger.info("已写出指标报告: %s", path)
    return path


def write_report_json(report: MetricsReport, path: Union[str, Path],
                      extra: Optional[Dict] = None) -> Path:
    data = {"metrics": report.to_dict()}
    if extra:
        data.update(extra)
    return save_json(path, data)


def improvement_rows(report: MetricsReport, method: str, baselines: Iterable[str],
                     scope: str = ALL_DAY) -> Dict[str, Optional[float]]:
    """method 相对最优对照（按该时段 RMSE 选取）的逐指标提升率"""
    best = report.best(baselines, scope)
    result = improvement(report.get(best, scope), report.get(method, scope))
    return {"baseline": best, **result}


def render_report(report: MetricsReport, title: str = "排队长度估计指标",
                  console: Optional[Console] = None) -> Table:
    """用 rich 表格打印报告（列：方法 × 时段 × 指标）"""
    table = Table(title=title)
    table.add_column("方法", style="bold")
    scopes = report.scopes
    for scope in scopes:
        for metric in METRIC_NAMES:
            table.add_column(f"{scope}\n{_HEADERS[metric]}", justify="right")
    for method in report.methods:
        cells = []
        for scope in scopes:
            metrics = report.entries[method].get(scope)
            for metric in METRIC_NAMES:
                cells.append("-" if metrics is None else _fmt(metrics.value(metric)))
        table.add_row(method, *cells)
    (console or Console(stderr=True)).print(table)
    return table
