"""
核心模块测试脚本
领域类型、时间基、测量模型、控制输入与文件读写

使用方法：
1. 在 core 目录内运行：python test.py
2. 从项目根目录运行：python -m core.test
"""
import sys
import tempfile
from datetime import datetime
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# 添加父目录到路径（如果在 core 目录内运行）
if Path(__file__).parent.name == 'core':
    sys.path.insert(0, str(Path(__file__).parent.parent))

from core import (
    AlignmentError,
    ConfigError,
    MeasurementModel,
    MissingDataError,
    QueueNetDataError,
    ReconstructionParams,
    RegimeEstimationError,
    ScalingError,
    SectionGeometry,
    SensorDay,
    SpeedRegimes,
    affine_rescale,
    bandpass_filter,
    clamp_queue,
    day_steps,
    derive_control,
    estimate_lambda_offline,
    estimate_lambda_online,
    estimate_regimes,
    expand_afcd,
    expected_speed,
    expected_speeds,
    impute_missing,
    jacobian_h,
    reconstruct_queue_raw,
    subsample_afcd,
)
from core.io import (
    DayFiles,
    Manifest,
    load_manifest,
    load_section_config,
    load_sensor_day,
    read_start_time,
    save_manifest,
    save_section_config,
    write_sensor_day,
)

T0 = datetime(2024, 3, 4, 6, 0)
REGIMES = SpeedRegimes(v_free=14.0, v_jam=2.0)
SEGMENT = (100.0, 200.0)


def _counts_day(inflow, outflow=None, n_segments=1):
    inflow = np.asarray(inflow, dtype=float)
    outflow = np.zeros_like(inflow) if outflow is None else np.asarray(outflow, dtype=float)
    intervals = -(-inflow.size // 6)
    return SensorDay(T0, inflow, outflow, np.full((n_segments, intervals), 10.0))


# ========== 领域类型 ==========

def test_default_day_has_5040_steps():
    assert day_steps() == 5040
    assert day_steps("07:00", "09:00") == 720


def test_geometry_rejects_gaps_and_bad_q_max():
    with pytest.raises(ConfigError):
        SectionGeometry("gap", 300.0, 2, ((0, 100), (120, 300)), 300.0)
    with pytest.raises(ConfigError):
        SectionGeometry("late", 300.0, 2, ((10, 100), (100, 300)), 300.0)
    with pytest.raises(ConfigError):
        SectionGeometry.uniform("long", 300.0, 2, 3, q_max_m=350.0)
    with pytest.raises(ConfigError):
        SectionGeometry.uniform("lanes", 300.0, 0, 3)
    with pytest.raises(ConfigError):
        SpeedRegimes(v_free=2.0, v_jam=14.0)


def test_uniform_geometry_boundaries():
    geometry = SectionGeometry.uniform("u", 500.0, 2, 5, q_max_m=450.0)
    np.testing.assert_array_equal(geometry.boundaries, [0, 100, 200, 300, 400, 500])
    np.testing.assert_array_equal(geometry.centers, [50, 150, 250, 350, 450])
    assert SectionGeometry.from_dict(geometry.to_dict()) == geometry


def test_sensor_day_validates_counts_and_lengths():
    with pytest.raises(QueueNetDataError):
        _counts_day([0.0, 2.0, 1.0])
    with pytest.raises(AlignmentError):
        SensorDay(T0, np.zeros(12), np.zeros(12), np.full((1, 4), 10.0))
    with pytest.raises(AlignmentError):
        SensorDay(T0, np.zeros(12), np.zeros(12), np.full((1, 2), 10.0), ground_truth_m=np.zeros(5))


def test_truncated_drops_partial_interval():
    day = SensorDay(T0, np.arange(15.0), np.zeros(15), np.full((2, 3), 10.0), ground_truth_m=np.zeros(15))
    short = day.truncated()
    assert short.steps == 12
    assert short.afcd_speeds.shape == (2, 2)
    assert short.ground_truth_m.size == 12


# ========== 时间基 ==========

def test_expand_afcd_replicates_values():
    np.testing.assert_array_equal(expand_afcd([12.0], 6), [[12.0] * 6])
    np.testing.assert_array_equal(expand_afcd([12.0, 3.0], 12), [[12.0] * 6 + [3.0] * 6])
    with pytest.raises(AlignmentError):
        expand_afcd([12.0], 9)


def test_expand_then_subsample_recovers_series():
    afcd = np.array([[12.0, 3.0, 7.5], [1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(subsample_afcd(expand_afcd(afcd, 18)), afcd)
    np.testing.assert_array_equal(subsample_afcd(expand_afcd(afcd, 14)), afcd)


def test_impute_missing_examples():
    nan = np.nan
    np.testing.assert_array_equal(impute_missing([5.0, nan, nan, 7.0]), [[5.0, 5.0, 5.0, 7.0]])
    np.testing.assert_array_equal(impute_missing([nan, 4.0]), [[4.0, 4.0]])
    with pytest.raises(MissingDataError):
        impute_missing([nan, nan])


def test_impute_missing_idempotent_and_causal_leading_fill():
    series = np.array([[np.nan, 3.0, np.nan, 8.0], [9.0, np.nan, 1.0, np.nan]])
    once = impute_missing(series)
    np.testing.assert_array_equal(impute_missing(once), once)
    present = ~np.isnan(series)
    np.testing.assert_array_equal(once[present], series[present])
    causal = impute_missing(series, causal=True, leading_fill=14.0)
    np.testing.assert_array_equal(causal[0], [14.0, 3.0, 3.0, 8.0])
    with pytest.raises(MissingDataError):
        impute_missing(series, causal=True)


def test_clamp_queue_examples():
    assert clamp_queue(-3.0, 450.0) == 0.0
    assert clamp_queue(9999.0, 450.0) == 450.0
    assert clamp_queue(120.0, 450.0) == 120.0
    xs = np.linspace(-100.0, 600.0, 71)
    once = clamp_queue(xs, 450.0)
    np.testing.assert_array_equal(clamp_queue(once, 450.0), once)
    assert np.all(np.diff(once) >= 0)


# ========== 测量模型 ==========

def test_expected_speed_examples():
    assert expected_speed(100.0, SEGMENT, REGIMES) == 14.0
    assert expected_speed(150.0, SEGMENT, REGIMES) == pytest.approx(3.5, abs=1e-12)
    assert expected_speed(250.0, SEGMENT, REGIMES) == 2.0


def _travel_time_speed(x, segment, regimes):
    l, r = segment
    queued = min(max(x - l, 0.0), r - l)
    free = (r - l) - queued
    return (r - l) / (queued / regimes.v_jam + free / regimes.v_free)


def test_expected_speed_matches_travel_time_oracle():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        v_jam = rng.uniform(0.5, 5.0)
        regimes = SpeedRegimes(v_free=v_jam + rng.uniform(3.0, 20.0), v_jam=v_jam)
        l = rng.uniform(0.0, 400.0)
        segment = (l, l + rng.uniform(10.0, 200.0))
        x = rng.uniform(0.0, 700.0)
        assert abs(expected_speed(x, segment, regimes) - _travel_time_speed(x, segment, regimes)) <= 1e-9


def test_expected_speeds_vector_and_monotonicity():
    geometry = SectionGeometry.uniform("five", 500.0, 2, 5)
    model = MeasurementModel(geometry, REGIMES)
    np.testing.assert_array_equal(expected_speeds(0.0, model), [14.0] * 5)
    np.testing.assert_allclose(expected_speeds(500.0, model), [2.0] * 5, atol=1e-12)
    mid = expected_speeds(250.0, model)
    np.testing.assert_allclose(mid, [2.0, 2.0, 3.5, 14.0, 14.0], atol=1e-12)
    xs = np.linspace(0.0, 500.0, 201)
    speeds = np.array([expected_speeds(x, model) for x in xs])
    assert np.all(np.diff(speeds, axis=0) <= 1e-12)
    assert speeds.min() >= 2.0 - 1e-12 and speeds.max() <= 14.0


def test_jacobian_matches_central_differences():
    geometry = SectionGeometry("one", 200.0, 1, ((0.0, 100.0), SEGMENT), 200.0)
    model = MeasurementModel(geometry, REGIMES)
    assert jacobian_h(150.0, model)[1] != 0.0
    assert jacobian_h(190.0, model)[0] == 0.0
    rng = np.random.default_rng(3)
    h = 1e-3
    for x in rng.uniform(100.01, 199.99, 100):
        numeric = (expected_speeds(x + h, model) - expected_speeds(x - h, model)) / (2 * h)
        analytic = jacobian_h(x, model)
        assert abs(analytic[1] - numeric[1]) <= 1e-6 * abs(numeric[1])
        assert analytic[0] == 0.0


def test_jacobian_boundary_uses_right_limit():
    geometry = SectionGeometry("two", 200.0, 1, ((0.0, 100.0), SEGMENT), 200.0)
    model = MeasurementModel(geometry, REGIMES)
    at_l = jacobian_h(100.0, model)
    slope = 1.0 / REGIMES.v_jam - 1.0 / REGIMES.v_free
    assert at_l[0] == 0.0
    assert at_l[1] == pytest.approx(-100.0 * slope / (100.0 / 14.0) ** 2)
    assert jacobian_h(200.0, model)[1] == 0.0
    assert jacobian_h(50.0, model)[1] == 0.0


def test_estimate_regimes_two_clusters():
    rng = np.random.default_rng(0)
    samples = np.concatenate([rng.normal(2.0, 0.3, 400), rng.normal(14.0, 0.3, 600)])
    regimes = estimate_regimes(samples)
    assert abs(regimes.v_jam - 2.0) <= 1.0
    assert abs(regimes.v_free - 14.0) <= 1.0


def test_estimate_regimes_with_sparse_noise():
    rng = np.random.default_rng(1)
    samples = np.concatenate([rng.normal(3.0, 0.2, 300), rng.normal(13.0, 0.2, 500),
                              rng.uniform(0.0, 20.0, 30)])
    regimes = estimate_regimes(samples)
    assert abs(regimes.v_jam - 3.0) <= 1.0
    assert abs(regimes.v_free - 13.0) <= 1.0


def test_estimate_regimes_unimodal_fails_with_histogram():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "hist.csv"
        with pytest.raises(RegimeEstimationError) as info:
            estimate_regimes(np.full(200, 10.0), histogram_path=path)
        assert path.exists()
        assert list(pd.read_csv(path).columns) == ["speed_mps", "count"]
    assert info.value.histogram is not None
    with pytest.raises(RegimeEstimationError):
        estimate_regimes(np.full(50, 10.0))


# ========== 控制输入 ==========

def test_reconstruct_queue_raw_examples():
    geometry = SectionGeometry.uniform("rq", 500.0, 2, 5)
    inflow = np.full(101, 30.0)
    inflow[0] = 20.0
    day = _counts_day(inflow)
    q = reconstruct_queue_raw(day, ReconstructionParams(0.0, 0.1, 0.02), geometry)
    assert q[0] == pytest.approx(0.0)
    assert q[1] == pytest.approx(62.5)
    drift = reconstruct_queue_raw(day, ReconstructionParams(0.01, 0.1, 0.02), geometry)
    assert drift[100] == pytest.approx(0.0)


def test_reconstruct_queue_raw_is_affine_above_floor():
    geometry = SectionGeometry.uniform("rq", 500.0, 2, 5)
    params = ReconstructionParams(0.0, 0.1, 0.02)
    base = 20.0 + np.arange(60.0)
    one = reconstruct_queue_raw(_counts_day(base), params, geometry)
    two = reconstruct_queue_raw(_counts_day(20.0 + 2 * np.arange(60.0)), params, geometry)
    np.testing.assert_allclose(two, 2 * one)


def test_lambda_offline_linear_and_constant():
    t = np.arange(720) * 10.0
    assert estimate_lambda_offline(_counts_day(0.05 * t), 60) == pytest.approx(0.05, rel=1e-9)
    assert estimate_lambda_offline(_counts_day(np.full(720, 40.0)), 60) == pytest.approx(0.0, abs=1e-12)


def test_lambda_offline_with_noise():
    rng = np.random.default_rng(5)
    t = np.arange(720) * 10.0
    outflow = 10.0 * np.arange(720)
    inflow = outflow + 0.05 * t + 100.0 + rng.normal(0.0, 1.0, 720)
    lam = estimate_lambda_offline(_counts_day(inflow, outflow), 60)
    assert abs(lam - 0.05) <= 0.005


def test_lambda_online_examples():
    t = np.arange(720) * 10.0
    linear = _counts_day(0.05 * t)
    online = estimate_lambda_online(linear, 60)
    offline = estimate_lambda_offline(linear, 60)
    assert abs(online[-1] - offline) <= 0.01 * offline
    np.testing.assert_allclose(estimate_lambda_online(_counts_day(np.full(720, 5.0)), 60), 0.0, atol=1e-9)
    drift = np.where(t < 3600.0, 0.03 * t, 0.03 * 3600.0 + 0.07 * (t - 3600.0))
    final = estimate_lambda_online(_counts_day(drift), 60)[-1]
    assert 0.03 < final < 0.07


def test_lambda_online_regresses_on_every_sample_so_far():
    t = np.arange(720) * 10.0
    rate = np.where(t < 2400.0, 0.01, np.where(t < 4800.0, 0.09, 0.01))
    net = np.concatenate([[0.0], np.cumsum(rate[:-1] * 10.0)])
    online = estimate_lambda_online(_counts_day(net), 60)
    assert not online[:59].any()
    for k in (59, 200, 500, 719):
        expected = np.polyfit(t[:k + 1], net[:k + 1], 1)[0]
        assert online[k] == pytest.approx(expected, rel=1e-6), k


def test_lambda_online_is_causal():
    t = np.arange(400) * 10.0
    a = 0.05 * t
    b = a.copy()
    b[300:] += 50.0
    np.testing.assert_array_equal(estimate_lambda_online(_counts_day(a), 60)[:300],
                                  estimate_lambda_online(_counts_day(b), 60)[:300])


def test_affine_rescale_examples():
    np.testing.assert_allclose(affine_rescale([1.0, 2.0, 3.0], 450.0), [0.0, 225.0, 450.0])
    np.testing.assert_allclose(affine_rescale([0.0, 30.0, 100.0], 100.0), [0.0, 30.0, 100.0])
    np.testing.assert_allclose(affine_rescale([-5.0, 0.0, 5.0], 100.0), [0.0, 50.0, 100.0])
    with pytest.raises(ScalingError):
        affine_rescale([4.0, 4.0, 4.0], 100.0)


def test_bandpass_examples():
    t = np.arange(1000) * 10.0
    assert np.max(np.abs(bandpass_filter(np.full(1000, 7.0), 1e-4, 5e-3))) <= 1e-9
    in_band = np.sin(2 * np.pi * 1e-3 * t)
    passed = bandpass_filter(in_band, 1e-4, 5e-3)
    assert np.sqrt(np.mean((passed - in_band) ** 2)) <= 1e-6
    mixed = 3.0 + in_band + 0.5 * np.sin(2 * np.pi * 0.04 * t)
    residual = bandpass_filter(mixed, 1e-4, 5e-3) - in_band
    assert np.sqrt(np.mean(residual ** 2)) < 1e-6


def test_bandpass_is_linear():
    rng = np.random.default_rng(2)
    s1, s2 = rng.normal(size=256), rng.normal(size=256)
    lhs = bandpass_filter(2.0 * s1 - 0.5 * s2, 1e-4, 1e-2)
    rhs = 2.0 * bandpass_filter(s1, 1e-4, 1e-2) - 0.5 * bandpass_filter(s2, 1e-4, 1e-2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_bandpass_rejects_short_signal():
    with pytest.raises(QueueNetDataError):
        bandpass_filter(np.ones(8), 1e-4, 1e-2)


def test_derive_control_zero_counts_and_telescoping():
    geometry = SectionGeometry.uniform("dc", 500.0, 2, 5)
    zero = derive_control(_counts_day(np.zeros(720)), geometry, boundary_window_steps=60)
    assert not zero.u.any()
    t = np.arange(720) * 10.0
    inflow = 0.02 * t + 30.0 * (1 + np.sin(2 * np.pi * t / 1800.0))
    inflow = np.maximum.accumulate(inflow)
    control = derive_control(_counts_day(inflow), geometry, boundary_window_steps=60)
    assert control.u[0] == 0.0
    np.testing.assert_allclose(np.cumsum(control.u), control.reconstructed_q - control.reconstructed_q[0],
                               atol=1e-9)
    with pytest.raises(ConfigError):
        derive_control(_counts_day(inflow), geometry, mode="bogus")


def _drift_day(period_s=600.0, amplitude=20.0):
    """A−D = 0.05·t + 周期性排队；两个边界窗口都覆盖整数个周期"""
    k = np.arange(5040)
    t = k * 10.0
    outflow = 5.0 * k
    inflow = outflow + 100.0 + 0.05 * t + amplitude * (1.0 - np.cos(2 * np.pi * t / period_s))
    return _counts_day(inflow, outflow)


def test_online_control_tracks_offline_on_linear_drift_day():
    geometry = SectionGeometry.uniform("drift", 500.0, 2, 5)
    band = (1.0 / 3600, 1.0 / 100)
    day = _drift_day()
    offline = derive_control(day, geometry, mode="offline", bandpass=band)
    online = derive_control(day, geometry, mode="online", bandpass=band)
    assert offline.lambda_c[0] == pytest.approx(0.05, rel=1e-4)
    assert online.lambda_c[-1] == pytest.approx(0.05, rel=1e-3)
    after_first_hour = slice(360, None)
    diff = online.u[after_first_hour] - offline.u[after_first_hour]
    rel = np.sqrt(np.mean(diff ** 2)) / np.sqrt(np.mean(offline.u[after_first_hour] ** 2))
    assert rel < 0.1


def test_online_control_is_causal_and_telescopes():
    geometry = SectionGeometry.uniform("drift", 500.0, 2, 5)
    day = _drift_day(period_s=1800.0)
    inflow = day.cum_inflow.copy()
    inflow[3000:] += 40.0
    altered = _counts_day(inflow, day.cum_outflow)
    a = derive_control(day, geometry, mode="online")
    b = derive_control(altered, geometry, mode="online")
    np.testing.assert_array_equal(a.u[:3000], b.u[:3000])
    assert a.u[0] == 0.0
    np.testing.assert_allclose(np.cumsum(a.u), a.reconstructed_q, atol=1e-9)


# ========== 文件读写 ==========

def test_sensor_day_csv_round_trip():
    afcd = np.array([[12.5, np.nan, 3.25], [14.0, 13.0, np.nan]])
    day = SensorDay(T0, np.arange(18.0), np.arange(18.0) // 2, afcd,
                    ground_truth_m=np.linspace(0.0, 85.0, 18), label="d1")
    with tempfile.TemporaryDirectory() as tmp:
        paths = write_sensor_day(day, tmp)
        loaded = load_sensor_day(paths["counts"], paths["afcd"], paths["truth"], n_segments=2)
        assert read_start_time(paths["truth"]) == T0
    assert loaded.t0 == T0
    np.testing.assert_array_equal(loaded.cum_inflow, day.cum_inflow)
    np.testing.assert_array_equal(loaded.cum_outflow, day.cum_outflow)
    np.testing.assert_array_equal(loaded.afcd_speeds, afcd)
    np.testing.assert_allclose(loaded.ground_truth_m, day.ground_truth_m, atol=1e-6)


def test_section_config_and_manifest_paths():
    geometry = SectionGeometry.uniform("s", 300.0, 2, 3, q_max_m=250.0)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        save_section_config(tmp / "section.json", geometry, REGIMES)
        loaded, regimes = load_section_config(tmp / "section.json")
        save_manifest(tmp / "manifest.json", Manifest(
            section=Path("section.json"),
            train=[DayFiles(Path("a_counts.csv"), Path("a_afcd.csv"), Path("a_truth.csv"), "a", False)],
        ))
        manifest = load_manifest(tmp / "manifest.json")
    assert loaded == geometry and regimes == REGIMES
    assert manifest.section == tmp / "section.json"
    assert manifest.train[0].counts == tmp / "a_counts.csv"
    assert manifest.train[0].weekend is False
    assert manifest.validation == [] and manifest.test == []


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
