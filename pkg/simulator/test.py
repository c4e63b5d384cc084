"""
仿真模块测试脚本

使用方法：
1. 在 simulator 目录内运行：python test.py
2. 从项目根目录运行：python -m simulator.test
"""
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

# 添加父目录到路径（如果在 simulator 目录内运行）
if Path(__file__).parent.name == 'simulator':
    sys.path.insert(0, str(Path(__file__).parent.parent))

from core.control import (
    bandpass_filter,
    derive_control,
    estimate_lambda_offline,
    estimate_lambda_online,
    reconstruct_queue_raw,
)
from core.exceptions import ConfigError, MissingDataError
from core.measurement import MeasurementModel
from core.models import SectionGeometry
from core.timebase import impute_missing
from simulator import (
    RateProfile,
    ScenarioConfig,
    SignalPlan,
    emit_afcd,
    interval_means,
    simulate_day,
    simulate_days,
)

QUIET = dict(afcd_noise_sd=0.0, afcd_delay_s=0.0, missing_prob=0.0)


def _scenario(**overrides):
    base = dict(start="06:00", end="07:00", **QUIET)
    base.update(overrides)
    return ScenarioConfig(**base)


# ========== 点排队动力学 ==========

def test_zero_demand_gives_empty_section():
    out = simulate_day(_scenario(demand=RateProfile.constant(0.0)))
    assert not out.day.ground_truth_m.any()
    assert not out.day.cum_inflow.any() and not out.day.cum_outflow.any()
    assert out.events.exit_s.size == 0


def test_all_green_below_saturation_never_queues():
    out = simulate_day(_scenario(demand=RateProfile.constant(0.3),
                                 signal=SignalPlan(fixed_state="green"), seed=4))
    assert not out.queue_s.any()
    assert out.events.departure_s.size > 0


def test_red_only_five_minutes_hand_value():
    geometry = SectionGeometry.uniform("red", 300.0, 2, 3)
    out = simulate_day(_scenario(
        geometry=geometry, end="06:10", demand=RateProfile.constant(0.2),
        lambda_unobserved=RateProfile.constant(0.0), signal=SignalPlan(fixed_state="red"),
        stochastic=False,
    ))
    assert out.events.departure_s.size == 0
    # 开始时路段内已按到达率铺设了 L / v_free 秒的车辆，队尾每延长 q 米，后车提前 q / v_free 秒入队：
    # q = s · r · (t + q / v_free)  →  q = s·r·t / (1 − s·r / v_free)，s 为每车占用的队长 7.5 / 2
    per_vehicle, rate, v_free = 7.5 / 2, 0.2, out.scenario.regimes.v_free
    expected = per_vehicle * rate * 300 / (1 - per_vehicle * rate / v_free)
    assert out.queue_s[300] == pytest.approx(expected, abs=7.5)
    assert out.queue_s[300] > per_vehicle * rate * (300 - 300 / v_free) + 7.5


def test_truth_queue_respects_q_max():
    geometry = SectionGeometry.uniform("short", 200.0, 1, 4, q_max_m=150.0)
    out = simulate_day(_scenario(geometry=geometry, demand=RateProfile.constant(0.4),
                                 signal=SignalPlan(fixed_state="red")))
    assert out.queue_s.max() == 150.0
    assert out.day.ground_truth_m.min() >= 0.0


# ========== 守恒 ==========

def test_event_log_conserves_vehicles_every_second():
    out = simulate_day(_scenario(demand=RateProfile.constant(0.35), seed=2))
    assert not out.events.conservation_residual().any()


def test_counts_without_unobserved_exits_equal_vehicles_inside():
    out = simulate_day(_scenario(lambda_unobserved=RateProfile.constant(0.0), seed=3))
    day = out.day
    inside = out.events.inside[np.arange(day.steps) * day.step_s]
    assert np.array_equal(day.net_accumulation, inside)
    assert np.all(np.diff(day.cum_inflow) >= 0) and np.all(np.diff(day.cum_outflow) >= 0)


def test_unobserved_exits_within_poisson_tolerance():
    scenario = _scenario(end="10:00", demand=RateProfile.constant(0.3),
                         lambda_unobserved=RateProfile.constant(0.03), seed=5)
    out = simulate_day(scenario)
    horizon = scenario.horizon_s
    expected = 0.03 * horizon
    a_end = out.events.arrival_s.size
    d_end = out.events.departure_s.size
    assert abs(a_end - d_end - out.events.inside[-1] - expected) <= 3 * np.sqrt(expected)


def test_conservation_inversion_recovers_true_queue():
    scenario = _scenario(end="08:00", demand=RateProfile.constant(0.2),
                         lambda_unobserved=RateProfile.constant(0.02), stochastic=False)
    out = simulate_day(scenario)
    q = reconstruct_queue_raw(out.day, out.reconstruction_params(), scenario.geometry)
    assert out.day.ground_truth_m.max() > 20.0
    assert np.max(np.abs(q - out.day.ground_truth_m)) <= 7.5


# ========== λ_c 可辨识性 ==========

def test_offline_lambda_recovered_on_ten_days():
    scenario = ScenarioConfig(stochastic=False, afcd_noise_sd=1.0)
    for out in simulate_days(scenario, range(10)):
        lam = estimate_lambda_offline(out.day)
        assert lam == pytest.approx(out.lambda_c, rel=0.05), out.day.label


def test_stochastic_lambda_tracks_realized_exits():
    out = simulate_day(ScenarioConfig(seed=21))
    offline = estimate_lambda_offline(out.day)
    assert offline == pytest.approx(out.realized_lambda, rel=0.05)


def test_online_lambda_final_matches_offline_on_drift_dominated_day():
    scenario = ScenarioConfig(demand=RateProfile.constant(0.3), signal=SignalPlan(fixed_state="green"),
                              stochastic=False, seed=21)
    out = simulate_day(scenario)
    assert not out.queue_s.any()
    offline = estimate_lambda_offline(out.day)
    online = estimate_lambda_online(out.day)
    assert online[-1] == pytest.approx(offline, rel=0.01)
    assert online[-1] == pytest.approx(out.lambda_c, rel=0.01)


def test_control_input_follows_true_queue_changes():
    out = simulate_day(ScenarioConfig(stochastic=False))
    control = derive_control(out.day, out.scenario.geometry)
    truth_change = np.diff(bandpass_filter(out.day.ground_truth_m, 1.0 / (4 * 3600), 1.0 / 240))
    assert np.corrcoef(control.u[1:], truth_change)[0, 1] > 0.8


# ========== aFCD ==========

def test_noiseless_afcd_equals_expected_speeds_of_interval_means():
    scenario = ScenarioConfig(**QUIET)
    out = simulate_day(scenario)
    model = MeasurementModel(scenario.geometry, scenario.regimes)
    n = out.day.afcd_speeds.shape[1]
    expected = np.stack([model.expected_speeds(q) for q in interval_means(out.queue_s, n)], axis=1)
    np.testing.assert_allclose(out.day.afcd_speeds, expected, atol=1e-9, rtol=0)


def test_afcd_delay_shifts_one_interval():
    scenario = ScenarioConfig(**QUIET)
    queue = simulate_day(scenario).queue_s
    undelayed = emit_afcd(queue, scenario, 840)
    delayed = emit_afcd(queue, replace(scenario, afcd_delay_s=60.0), 840)
    np.testing.assert_array_equal(delayed[:, 1:], undelayed[:, :-1])


def test_noisy_afcd_clipped_and_partially_missing():
    scenario = ScenarioConfig(afcd_noise_sd=8.0, missing_prob=0.2, seed=9)
    speeds = simulate_day(scenario).day.afcd_speeds
    observed = speeds[~np.isnan(speeds)]
    assert observed.min() >= 0.5 * scenario.regimes.v_jam
    assert observed.max() <= 1.2 * scenario.regimes.v_free
    assert 0.1 < np.isnan(speeds).mean() < 0.3


def test_dead_segment_triggers_imputation_error():
    out = simulate_day(_scenario(dead_segments=(2,)))
    assert np.isnan(out.day.afcd_speeds[2]).all()
    with pytest.raises(MissingDataError):
        impute_missing(out.day.afcd_speeds)


# ========== 场景与批量 ==========

def test_seeded_simulation_is_deterministic():
    scenario = _scenario(afcd_noise_sd=1.0, missing_prob=0.1, seed=13)
    a, b = simulate_day(scenario), simulate_day(scenario)
    np.testing.assert_array_equal(a.day.cum_inflow, b.day.cum_inflow)
    np.testing.assert_array_equal(a.day.afcd_speeds, b.day.afcd_speeds)
    np.testing.assert_array_equal(a.queue_s, b.queue_s)


def test_simulate_days_labels_weekends_by_date():
    outputs = simulate_days(_scenario(end="06:10"), range(7))
    assert [o.weekend for o in outputs] == [False] * 5 + [True] * 2
    assert len({o.day.label for o in outputs}) == 7
    weekday = outputs[0].demand.rate(0.0)
    assert outputs[5].demand.rate(0.0) == pytest.approx(weekday * 0.7)


def test_scenario_validation():
    with pytest.raises(ConfigError):
        SignalPlan(green_ratio=1.0)
    with pytest.raises(ConfigError):
        RateProfile((0.0, 10.0), (0.1, -0.2))
    with pytest.raises(ConfigError):
        ScenarioConfig(missing_prob=1.0)
    with pytest.raises(ConfigError):
        ScenarioConfig(dead_segments=(9,))


def test_scenario_dict_round_trip():
    scenario = ScenarioConfig(signal=SignalPlan(cycle_s=120.0, green_ratio=0.4), seed=8,
                              dead_segments=(1,))
    assert ScenarioConfig.from_dict(scenario.to_dict()) == scenario


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
