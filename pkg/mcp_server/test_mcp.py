"""
MCP 服务器业务函数测试脚本

使用方法：
1. 在 mcp_server 目录内运行：python test_mcp.py
2. 从项目根目录运行：python -m mcp_server.test_mcp
"""
import sys
import tempfile
from datetime import datetime, timedelta
from pathlib import Path

import pandas as pd
import pytest

# 添加父目录到路径（如果在 mcp_server 目录内运行）
if Path(__file__).parent.name == 'mcp_server':
    sys.path.insert(0, str(Path(__file__).parent.parent))

from mcp_server.server import (
    estimate_queue,
    evaluate_estimates,
    fit_speed_regimes,
    simulate_scenario,
)

# ========== 配置参数 ==========
SHORT_DAY = {"start": "06:00", "end": "08:00", "seed": 11}


def _write_afcd(path: Path, speeds) -> Path:
    t0 = datetime(2024, 3, 4, 6)
    rows = [((t0 + timedelta(minutes=i // 5)).isoformat(), i % 5, v) for i, v in enumerate(speeds)]
    pd.DataFrame(rows, columns=["t_iso", "segment_index", "speed_mps"]).to_csv(path, index=False)
    return path


# ========== 仿真 / 估计 / 评估 ==========

def test_simulate_estimate_evaluate_round():
    with tempfile.TemporaryDirectory() as tmp:
        sim = simulate_scenario(SHORT_DAY, days=2, output_dir=tmp)
        assert sim["ok"], sim["error"]
        assert len(sim["days"]) == 2
        assert sim["days"][0]["label"] != sim["days"][1]["label"]
        first = sim["days"][0]
        for key in ("counts", "afcd", "truth"):
            assert Path(first[key]).exists()

        est = estimate_queue(first["counts"], first["afcd"], sim["section_path"], variant="qekf",
                             output_path=str(Path(tmp) / "qekf.csv"))
        assert est["ok"], est["error"]
        assert est["steps"] == 720
        assert 0.0 <= est["mean_posterior_m"] <= est["max_posterior_m"]

        report = evaluate_estimates(first["truth"], {"qekf": est["estimate_path"]},
                                    include_baselines=True, counts_path=first["counts"],
                                    afcd_path=first["afcd"], section_path=sim["section_path"],
                                    report_path=str(Path(tmp) / "report.csv"))
        assert report["ok"], report["error"]
        assert set(report["metrics"]) == {"qekf", "osd", "isc"}
        assert Path(report["report_path"]).exists()


def test_learned_variant_needs_checkpoint():
    with tempfile.TemporaryDirectory() as tmp:
        sim = simulate_scenario(SHORT_DAY, output_dir=tmp)
        day = sim["days"][0]
        result = estimate_queue(day["counts"], day["afcd"], sim["section_path"], variant="qnet")
    assert not result["ok"]
    assert result["error"].startswith("config_error")


def test_missing_truth_is_data_error():
    result = evaluate_estimates("/nonexistent/truth.csv", {"a": "/nonexistent/a.csv"})
    assert not result["ok"]
    assert result["error"].startswith("data_error")
    assert result["metrics"] is None


# ========== 速度状态 ==========

def test_fit_speed_regimes_two_modes():
    with tempfile.TemporaryDirectory() as tmp:
        path = _write_afcd(Path(tmp) / "afcd.csv", [14.3] * 300 + [2.2] * 200)
        result = fit_speed_regimes([str(path)], n_segments=5)
    assert result["ok"], result["error"]
    assert result["samples"] == 500
    assert result["regimes"]["v_free"] == pytest.approx(14.3)
    assert result["regimes"]["v_jam"] == pytest.approx(2.2)


def test_fit_speed_regimes_too_few_samples():
    with tempfile.TemporaryDirectory() as tmp:
        path = _write_afcd(Path(tmp) / "afcd.csv", [14.0] * 20)
        result = fit_speed_regimes([str(path)])
    assert not result["ok"]
    assert result["error"].startswith("data_error")


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
