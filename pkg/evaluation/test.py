"""
评估模块测试脚本

使用方法：
1. 在 evaluation 目录内运行：python test.py
2. 从项目根目录运行：python -m evaluation.test
"""
import io
import sys
import tempfile
from datetime import datetime
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from rich.console import Console

# 添加父目录到路径（如果在 evaluation 目录内运行）
if Path(__file__).parent.name == 'evaluation':
    sys.path.insert(0, str(Path(__file__).parent.parent))

from core.exceptions import AlignmentError, QueueNetNumericError
from evaluation import (
    ALL_DAY,
    EXPERIMENT_TRAIN_DEFAULTS,
    EvaluatedDay,
    ExperimentConfig,
    MetricsReport,
    compute_metrics,
    improvement,
    onset_lags,
    per_step_errors,
    pooled_report,
    render_report,
    run_benchmark,
    scope_masks,
    score,
    write_report_csv,
)
from simulator import ScenarioConfig
from training import TrainConfig

T0 = datetime(2024, 3, 4, 6, 0)


# ========== 指标 ==========

def test_perfect_estimate_scores_zero():
    truth = np.array([0.0, 20.0, 40.0])
    metrics = score(truth, truth)
    assert metrics.rmse_m == 0.0 and metrics.mae_m == 0.0 and metrics.mape_pct == 0.0


def test_hand_values_with_empty_mape_support():
    metrics = score([0.0, 0.0], [3.0, 4.0])
    assert metrics.rmse_m == pytest.approx(3.53553, abs=1e-5)
    assert metrics.mae_m == 3.5
    assert metrics.mape_pct is None


def test_single_point_mape():
    assert score([20.0], [25.0]).mape_pct == pytest.approx(25.0)


def test_mape_ignores_short_truth_points():
    base = score([20.0, 40.0], [25.0, 30.0]).mape_pct
    extended = score([20.0, 40.0, 5.0, 10.0], [25.0, 30.0, 90.0, 0.0]).mape_pct
    assert extended == pytest.approx(base)


def test_length_mismatch_rejected():
    with pytest.raises(AlignmentError):
        score([1.0, 2.0], [1.0])


def test_peak_masks_follow_clock():
    masks = scope_masks(T0, 5040)
    assert masks[ALL_DAY].sum() == 5040
    assert masks["morning_peak"].sum() == 720
    assert masks["afternoon_peak"].sum() == 720
    assert masks["morning_peak"][360] and not masks["morning_peak"][359]


def test_compute_metrics_slices_scopes():
    truth = np.zeros(5040)
    estimate = np.zeros(5040)
    estimate[360:1080] = 12.0
    report = compute_metrics(truth, estimate, T0, method="m")
    assert report.get("m", "morning_peak").rmse_m == pytest.approx(12.0)
    assert report.get("m", "afternoon_peak").rmse_m == 0.0
    assert report.get("m").mae_m == pytest.approx(12.0 * 720 / 5040)


def test_short_day_skips_empty_peak_scope():
    report = compute_metrics(np.zeros(60), np.ones(60), T0)
    assert report.scopes == [ALL_DAY]


def test_pooled_report_concatenates_days():
    a = EvaluatedDay(T0, np.zeros(10), {"m": np.full(10, 3.0)})
    b = EvaluatedDay(T0, np.zeros(30), {"m": np.full(30, 1.0)})
    pooled = pooled_report([a, b])
    assert pooled.get("m").rmse_m == pytest.approx(np.sqrt((10 * 9 + 30 * 1) / 40))


# ========== 提升率 ==========

def test_improvement_table_value():
    assert round(improvement(188.99, 71.65), 2) == 62.09


def test_improvement_edge_cases():
    assert improvement(50.0, 50.0) == 0.0
    assert improvement(50.0, 0.0) == 100.0
    with pytest.raises(QueueNetNumericError):
        improvement(0.0, 1.0)


def test_improvement_per_metric_keeps_undefined_mape():
    base = score([0.0, 0.0], [6.0, 8.0])
    method = score([0.0, 0.0], [3.0, 4.0])
    result = improvement(base, method)
    assert result["rmse_m"] == pytest.approx(50.0)
    assert result["mape_pct"] is None


# ========== 排队起始滞后 ==========

def test_onset_lag_in_seconds():
    truth = np.zeros(100)
    truth[40:] = 80.0
    estimate = np.zeros(100)
    estimate[46:] = 60.0
    lags = onset_lags(truth, estimate)
    assert lags[ALL_DAY] == 60.0


def test_onset_lag_undefined_without_crossing():
    truth = np.zeros(50)
    truth[10:] = 70.0
    assert onset_lags(truth, np.zeros(50))[ALL_DAY] is None


# ========== 输出 ==========

def test_per_step_errors_long_format():
    frame = per_step_errors(T0, [0.0, 10.0], {"a": [1.0, 10.0], "b": [0.0, 4.0]}, label="d1")
    assert list(frame.columns) == ["timestamp", "day", "method", "abs_error_m"]
    assert frame["abs_error_m"].tolist() == [1.0, 0.0, 0.0, 6.0]
    assert frame["timestamp"].iloc[1] == "2024-03-04T06:00:10"


def test_report_csv_and_table():
    report = MetricsReport()
    compute_metrics([0.0, 20.0], [1.0, 22.0], T0, method="qnet", report=report)
    compute_metrics([0.0, 20.0], [5.0, 30.0], T0, method="osd", report=report)
    with tempfile.TemporaryDirectory() as tmp:
        path = write_report_csv(report, Path(tmp) / "report.csv")
        frame = pd.read_csv(path)
    assert set(frame["method"]) == {"qnet", "osd"}
    buffer = io.StringIO()
    render_report(report, console=Console(file=buffer, width=200))
    assert "qnet" in buffer.getvalue() and "osd" in buffer.getvalue()
    assert report.best(["qnet", "osd"]) == "qnet"


# ========== 实验编排 ==========

def test_default_experiment_trains_within_ten_minutes():
    config = ExperimentConfig()
    assert config.train.time_budget_s is not None and config.train.time_budget_s <= 600.0
    assert (config.train_days, config.test_days, config.transfer_segments) == (8, 3, 8)
    partial = ExperimentConfig.from_dict({"train": {"epochs": 3}})
    assert partial.train.epochs == 3
    assert partial.train.time_budget_s == EXPERIMENT_TRAIN_DEFAULTS["time_budget_s"]


def test_benchmark_smoke_on_short_days():
    scenario = ScenarioConfig(start="06:00", end="08:00")
    config = ExperimentConfig(
        scenario=scenario, train_days=2, test_days=1, ablation=False,
        train=TrainConfig(epochs=1, window_steps=60, boundary_window_steps=60),
    )
    assert ExperimentConfig.from_dict(config.to_dict()) == config
    with tempfile.TemporaryDirectory() as tmp:
        result = run_benchmark(config, out_dir=tmp)
        for path in result.outputs.values():
            assert Path(path).exists()
    assert {"qnet", "qekf", "osd", "isc"} <= set(result.report.methods)
    assert "qnet" in result.transfer_report.methods
    assert result.improvement["baseline"] in {"osd", "isc", "qekf"}
    assert len(result.onset) == 1


def main():
    tests = [obj for name, obj in sorted(globals().items()) if name.startswith("test_") and callable(obj)]
    failed = 0
    for test in tests:
        try:
            test()
            print(f"[OK]   {test.__name__}")
        except Exception as exc:  # noqa: BLE001
            failed += 1
            print(f"[FAIL] {test.__name__}: {exc!r}")
    print(f"\n{len(tests) - failed}/{len(tests)} 通过")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
