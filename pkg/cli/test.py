"""
命令行测试脚本

使用方法：
1. 在 cli 目录内运行：python test.py
2. 从项目根目录运行：python -m cli.test
"""
import json
import sys
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

# 添加父目录到路径（如果在 cli 目录内运行）
if Path(__file__).parent.name == 'cli':
    sys.path.insert(0, str(Path(__file__).parent.parent))

from cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, run_realtime
from cli import main as qnet
from core.io import load_section_config, load_sensor_day
from estimator import StreamingEstimator, run_day
from gainnet import GainNet

SHORT_DAY = {"start": "06:00", "end": "08:00", "seed": 3}


def _simulate(tmp: Path, days: int = 1, **extra) -> Path:
    scenario = tmp / "scenario_in.json"
    scenario.write_text(json.dumps({**SHORT_DAY, **extra}), encoding="utf-8")
    out = tmp / "sim"
    assert qnet(["simulate", "--scenario", str(scenario), "--days", str(days), "--out", str(out)]) == EXIT_OK
    return out


def _checkpoint(tmp: Path) -> Path:
    return GainNet(seed=0).save(tmp / "untrained.json")


# ========== 参数与退出码 ==========

def test_unknown_flag_is_usage_error():
    assert qnet(["evaluate", "--no-such-flag"]) == EXIT_USAGE
    assert qnet([]) == EXIT_USAGE


def test_missing_input_is_data_error():
    with tempfile.TemporaryDirectory() as tmp:
        code = qnet(["--output-dir", tmp, "evaluate", "--truth", str(Path(tmp) / "absent.csv"),
                     "--estimate", str(Path(tmp) / "absent.csv"), "-q"])
    assert code == EXIT_DATA


# ========== evaluate ==========

def test_evaluate_identical_files_gives_zero_report():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        truth = tmp / "truth.csv"
        stamps = pd.date_range("2024-03-04 07:00", periods=120, freq="10s")
        pd.DataFrame({"t_iso": stamps.strftime("%Y-%m-%dT%H:%M:%S"),
                      "queue_m": np.linspace(0, 200, 120)}).to_csv(truth, index=False)
        assert qnet(["--output-dir", str(tmp), "evaluate", "--truth", str(truth),
                     "--estimate", f"same={truth}", "-q"]) == EXIT_OK
        report = pd.read_csv(tmp / "report.csv")
        summary = json.loads((tmp / "report.json").read_text(encoding="utf-8"))
    assert set(report["scope"]) == {"all_day", "morning_peak"}
    assert (report[["rmse_m", "mae_m", "mape_pct"]] == 0).all().all()
    assert summary["metrics"]["same"]["all_day"]["n_steps"] == 120


# ========== 端到端 ==========

def test_simulate_estimate_evaluate_pipeline():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        sim = _simulate(tmp)
        for name in ("counts.csv", "afcd.csv", "truth.csv", "scenario.json", "section.json", "manifest.json"):
            assert (sim / name).exists(), name
        common = ["--counts", str(sim / "counts.csv"), "--afcd", str(sim / "afcd.csv"),
                  "--section", str(sim / "section.json")]
        assert qnet(["estimate", *common, "--variant", "qekf", "--out", str(tmp / "qekf.csv"),
                     "--trace", str(tmp / "qekf_trace.json")]) == EXIT_OK
        assert qnet(["estimate", *common, "--checkpoint", str(_checkpoint(tmp)),
                     "--out", str(tmp / "qnet.csv")]) == EXIT_OK
        assert qnet(["evaluate", "--truth", str(sim / "truth.csv"),
                     "--estimate", f"qekf={tmp / 'qekf.csv'}", "--estimate", f"qnet={tmp / 'qnet.csv'}",
                     "--baselines", *common, "--errors", str(tmp / "errors.csv"),
                     "--out", str(tmp / "report.csv"), "-q"]) == EXIT_OK
        report = pd.read_csv(tmp / "report.csv")
        errors = pd.read_csv(tmp / "errors.csv")
        trace = json.loads((tmp / "qekf_trace.json").read_text(encoding="utf-8"))
    assert set(report["method"]) == {"qekf", "qnet", "osd", "isc"}
    assert report["rmse_m"].notna().all()
    assert len(errors) == 4 * 720
    assert len(trace["variances"]) == 720


def test_derive_control_writes_series():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        sim = _simulate(tmp)
        out = tmp / "control.csv"
        assert qnet(["derive-control", "--counts", str(sim / "counts.csv"),
                     "--section", str(sim / "section.json"), "--out", str(out)]) == EXIT_OK
        control = pd.read_csv(out)
    assert list(control.columns) == ["t_iso", "u_m", "q_reconstructed_m"]
    assert len(control) == 720
    assert control["u_m"].iloc[0] == 0.0


def test_train_from_manifest():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        sim = _simulate(tmp, days=2, afcd_noise_sd=0.5)
        config = tmp / "train.json"
        config.write_text(json.dumps({"epochs": 1, "window_steps": 60, "boundary_window_steps": 60}),
                          encoding="utf-8")
        checkpoint = tmp / "model" / "qnet.json"
        assert qnet(["train", "--manifest", str(sim / "manifest.json"), "--config", str(config),
                     "--out", str(checkpoint)]) == EXIT_OK
        curve = pd.read_csv(checkpoint.with_name("metrics.csv"))
        assert checkpoint.exists()
        GainNet.load(checkpoint)
    assert list(curve.columns) == ["epoch", "train_rmse", "val_rmse"]
    assert len(curve) == 1


# ========== realtime ==========

def test_realtime_matches_batch_online_file():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        sim = _simulate(tmp)
        common = ["--counts", str(sim / "counts.csv"), "--afcd", str(sim / "afcd.csv"),
                  "--section", str(sim / "section.json"), "--checkpoint", str(_checkpoint(tmp))]
        assert qnet(["estimate", *common, "--mode", "online", "--out", str(tmp / "batch.csv")]) == EXIT_OK
        assert qnet(["realtime", *common, "-q", "--out", str(tmp / "stream.csv")]) == EXIT_OK
        batch = (tmp / "batch.csv").read_text(encoding="utf-8")
        stream = (tmp / "stream.csv").read_text(encoding="utf-8")
    assert batch == stream


def test_realtime_posteriors_bit_exact():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        sim = _simulate(tmp, missing_prob=0.2)
        geometry, regimes = load_section_config(sim / "section.json")
        day = load_sensor_day(sim / "counts.csv", sim / "afcd.csv", n_segments=geometry.n_segments)
        for variant, net in (("qnet", GainNet(seed=1)), ("qekf", None)):
            batch = run_day(day, geometry, regimes, variant, gain_net=net, mode="online")
            seen = []
            t0, stream = run_realtime(StreamingEstimator(geometry, regimes, variant, gain_net=net),
                                      sim / "counts.csv", sim / "afcd.csv", geometry.n_segments,
                                      on_step=lambda t, prior, post: seen.append(t))
            assert t0 == day.t0
            assert seen == day.timestamps()
            np.testing.assert_array_equal(stream.posterior_m, batch.posterior_m)
            np.testing.assert_array_equal(stream.prior_m, batch.prior_m)


def _append_counts_rows(counts: Path, rows: int) -> None:
    """在计数文件末尾追加不足一个 60 s 区间的行（aFCD 不变）"""
    frame = pd.read_csv(counts, encoding="utf-8")
    last = frame.iloc[-1]
    start = pd.Timestamp(last["t_iso"])
    extra = pd.DataFrame({
        "t_iso": [(start + pd.Timedelta(seconds=10 * (i + 1))).isoformat() for i in range(rows)],
        "cum_inflow": [int(last["cum_inflow"]) + i + 1 for i in range(rows)],
        "cum_outflow": [int(last["cum_outflow"])] * rows,
    })
    pd.concat([frame, extra], ignore_index=True).to_csv(counts, index=False, encoding="utf-8")


def test_realtime_drops_partial_trailing_interval():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        sim = _simulate(tmp)
        _append_counts_rows(sim / "counts.csv", 3)
        geometry, regimes = load_section_config(sim / "section.json")
        day = load_sensor_day(sim / "counts.csv", sim / "afcd.csv", n_segments=geometry.n_segments)
        assert day.steps == 720
        batch = run_day(day, geometry, regimes, "qekf", mode="online")
        seen = []
        _, stream = run_realtime(StreamingEstimator(geometry, regimes, "qekf"),
                                 sim / "counts.csv", sim / "afcd.csv", geometry.n_segments,
                                 on_step=lambda t, prior, post: seen.append(t))
        assert seen == day.timestamps()
        np.testing.assert_array_equal(stream.posterior_m, batch.posterior_m)

        common = ["--counts", str(sim / "counts.csv"), "--afcd", str(sim / "afcd.csv"),
                  "--section", str(sim / "section.json"), "--variant", "qekf"]
        assert qnet(["estimate", *common, "--mode", "online", "--out", str(tmp / "batch.csv")]) == EXIT_OK
        assert qnet(["realtime", *common, "-q", "--out", str(tmp / "stream.csv")]) == EXIT_OK
        batch_text = (tmp / "batch.csv").read_text(encoding="utf-8")
        stream_text = (tmp / "stream.csv").read_text(encoding="utf-8")
    assert batch_text == stream_text
    assert len(batch_text.strip().splitlines()) == 721


def test_realtime_requires_regimes_in_section():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        sim = _simulate(tmp)
        bare = tmp / "bare_section.json"
        data = json.loads((sim / "section.json").read_text(encoding="utf-8"))
        data.pop("v_free")
        data.pop("v_jam")
        bare.write_text(json.dumps(data), encoding="utf-8")
        code = qnet(["realtime", "--counts", str(sim / "counts.csv"), "--afcd", str(sim / "afcd.csv"),
                     "--section", str(bare), "--variant", "qekf", "-q"])
    assert code == EXIT_DATA


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
