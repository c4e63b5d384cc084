"""
评估：指标、高峰切片、提升率、排队起始滞后、报告输出与实验编排
"""

from .experiments import (
    COMPARISON_BASELINES,
    EXPERIMENT_TRAIN_DEFAULTS,
    BenchmarkResult,
    ExperimentConfig,
    fit_regimes,
    run_benchmark,
)
from .metrics import (
    ALL_DAY,
    DEFAULT_PEAKS,
    MAPE_MIN_TRUTH_M,
    ONSET_THRESHOLD_M,
    EvaluatedDay,
    MetricsReport,
    ScopeMetrics,
    compute_metrics,
    first_crossing,
    improvement,
    onset_lags,
    per_step_errors,
    pooled_report,
    scope_masks,
    score,
    write_errors_csv,
)
from .report import improvement_rows, render_report, write_report_csv, write_report_json

__all__ = [
    "ALL_DAY",
    "DEFAULT_PEAKS",
    "MAPE_MIN_TRUTH_M",
    "ONSET_THRESHOLD_M",
    "ScopeMetrics",
    "MetricsReport",
    "EvaluatedDay",
    "score",
    "scope_masks",
    "compute_metrics",
    "pooled_report",
    "improvement",
    "first_crossing",
    "onset_lags",
    "per_step_errors",
    "write_errors_csv",
    "write_report_csv",
    "write_report_json",
    "render_report",
    "improvement_rows",
    "ExperimentConfig",
    "EXPERIMENT_TRAIN_DEFAULTS",
    "COMPARISON_BASELINES",
    "BenchmarkResult",
    "fit_regimes",
    "run_benchmark",
]
