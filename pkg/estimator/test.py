"""
滤波器测试脚本

使用方法：
1. 在 estimator 目录内运行：python test.py
2. 从项目根目录运行：python -m estimator.test
"""
import sys
from datetime import datetime
from pathlib import Path

import numpy as np
import pytest

# 添加父目录到路径（如果在 estimator 目录内运行）
if Path(__file__).parent.name == 'estimator':
    sys.path.insert(0, str(Path(__file__).parent.parent))

from core.exceptions import AlignmentError, ConfigError, FilterRunError, GroupingError
from core.measurement import MeasurementModel
from core.models import SectionGeometry, SensorDay, SpeedRegimes
from core.timebase import clamp_queue
from estimator import (
    EkfParams,
    EkfStepper,
    LinearKalmanFilter,
    LinearMeasurement,
    QNetRecursion,
    QNetStepper,
    StreamingEstimator,
    make_stepper,
    predict,
    run_day,
    update_ekf,
    update_learned,
)
from gainnet import FeatureScale, GainNet, group_indices, grouped_update
from neural import Tape, check_gradients, ops

GEOMETRY = SectionGeometry.uniform("test", 300.0, 2, 5)
REGIMES = SpeedRegimes(v_free=14.0, v_jam=2.0)
MODEL = MeasurementModel(GEOMETRY, REGIMES)
SCALE = FeatureScale(GEOMETRY.q_max_m, REGIMES.v_free)
T0 = datetime(2024, 3, 4, 6, 0)


def _zero_weights(net):
    for name in net.store.names():
        if name.endswith(".weight") or ".W_" in name or ".U_" in name:
            net.store.view(name)[:] = 0.0
    return net


def _free_flow_day(steps=120):
    return SensorDay(
        t0=T0,
        cum_inflow=np.zeros(steps),
        cum_outflow=np.zeros(steps),
        afcd_speeds=np.full((5, steps // 6), REGIMES.v_free),
    )


def _synthetic_day(seed=0, steps=360):
    rng = np.random.default_rng(seed)
    afcd = rng.uniform(3.0, 14.0, size=(5, steps // 6))
    afcd[1, 3] = np.nan
    afcd[4, 0] = np.nan
    return SensorDay(
        t0=T0,
        cum_inflow=np.cumsum(rng.poisson(3.0, steps)).astype(float),
        cum_outflow=np.cumsum(rng.poisson(2.9, steps)).astype(float),
        afcd_speeds=afcd,
    )


# ========== 预测 ==========

def test_predict_lower_clamp():
    x_prior, _ = predict(5.0, -10.0, 450.0, MODEL)
    assert x_prior == 0.0


def test_predict_upper_clamp():
    x_prior, _ = predict(445.0, 10.0, 450.0, MODEL)
    assert x_prior == 450.0


def test_predict_in_range_uses_measurement_model():
    x_prior, y_pred = predict(50.0, 10.0, 300.0, MODEL)
    assert x_prior == 60.0
    np.testing.assert_array_equal(y_pred, MODEL.expected_speeds(60.0))


# ========== 学习型更新 ==========

def test_update_learned_zero_innovation_keeps_prior():
    net = GainNet(seed=1)
    y = MODEL.expected_speeds(120.0)
    state = net.initial_state(3, Tape(net.store, record=False))
    result = update_learned(120.0, y, y, state, net, GEOMETRY.q_max_m, SCALE)
    assert float(result.x_post.value) == 120.0


def test_update_learned_bias_driven_gains_match_grouped_sum():
    net = _zero_weights(GainNet(seed=2))
    bias = np.array([0.01, 0.02, -0.01])
    net.store.view("d.out.bias")[:] = bias
    y_t = np.array([10.0, 9.0, 8.0, 7.0, 6.0])
    y_pred = np.array([9.5, 9.2, 8.1, 6.9, 6.3])
    state = net.initial_state(3, Tape(net.store, record=False))
    result = update_learned(100.0, y_t, y_pred, state, net, GEOMETRY.q_max_m, SCALE)

    innov = (y_t - y_pred)[group_indices(5)]
    gains = np.tile(bias * SCALE.gain_scale, (3, 1))
    expected = grouped_update(100.0, gains, innov)
    assert float(result.x_post.value) == pytest.approx(expected, abs=1e-10)
    np.testing.assert_allclose(result.gains.value, gains, rtol=0, atol=1e-12)


def test_update_learned_clamps_negative_posterior():
    geometry = SectionGeometry.uniform("short", 300.0, 2, 3)
    scale = FeatureScale(geometry.q_max_m, REGIMES.v_free)
    net = _zero_weights(GainNet(seed=3))
    net.store.view("d.out.bias")[:] = [0.0, -2.0 / scale.gain_scale, 0.0]
    state = net.initial_state(1, Tape(net.store, record=False))
    result = update_learned(5.0, np.array([14.0, 12.0, 14.0]), np.array([14.0, 2.0, 14.0]),
                            state, net, geometry.q_max_m, scale)
    assert float(result.x_raw.value) == pytest.approx(-15.0, abs=1e-9)
    assert float(result.x_post.value) == 0.0


def test_zero_innovation_tracks_clamped_cumulative_control():
    stepper = QNetStepper(GainNet(seed=4), MODEL)
    u = np.random.default_rng(5).normal(0.0, 40.0, size=60)
    x = 0.0
    for u_t in u:
        prior = clamp_queue(x + u_t, GEOMETRY.q_max_m)
        record = stepper.step(u_t, MODEL.expected_speeds(prior))
        assert record.x_prior == prior
        assert record.x_post == prior
        x = prior


def test_recursion_gradient_check_without_clamp():
    net = GainNet(seed=41)
    recursion = QNetRecursion(net, MODEL, clamp=False)
    rng = np.random.default_rng(42)
    speeds = rng.uniform(3.0, 13.0, size=(4, 5))
    u = [30.0, 10.0, -5.0, 8.0]
    truth = [40.0, 55.0, 50.0, 60.0]

    def loss_fn(tape):
        carry = recursion.initial_carry(tape, x0=20.0)
        errors = []
        for k in range(4):
            step = recursion.step(carry, u[k], speeds[k], tape)
            carry = step.carry
            errors.append(ops.scale(ops.sub(step.x_post, truth[k]), 1.0 / GEOMETRY.q_max_m))
        return ops.mean(ops.square(ops.stack(errors)))

    report = check_gradients(loss_fn, net.store, n_params=50, rng=np.random.default_rng(43))
    assert report.passed(1e-4), report.max_rel_error


# ========== Q-EKF ==========

def test_ekf_huge_measurement_noise_keeps_prior():
    params = EkfParams(measurement_var=1e12)
    y = MODEL.expected_speeds(150.0)
    x_post, _, _ = update_ekf(90.0, 50.0, y, MODEL.expected_speeds(90.0), params, 300.0, MODEL)
    assert x_post == pytest.approx(90.0, abs=1e-6)


def test_ekf_variance_non_increasing_without_process_noise():
    params = EkfParams()
    y = MODEL.expected_speeds(100.0)
    y_pred = MODEL.expected_speeds(90.0)
    sigma = params.initial_var
    history = [sigma]
    for _ in range(20):
        _, sigma, _ = update_ekf(90.0, sigma, y, y_pred, params, 300.0, MODEL)
        history.append(sigma)
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


def test_ekf_scalar_identity_matches_textbook_recursion():
    measurement = LinearMeasurement(np.array([1.0]), np.array([0.0]))
    params = EkfParams(process_var=2.0, measurement_var=4.0, initial_var=9.0)
    stepper = EkfStepper(measurement, params, q_max=1e6)
    ys = [46.0, 50.0, 47.5, 52.0]
    us = [40.0, 1.0, -0.5, 2.0]
    x, sigma = 0.0, params.initial_var
    for u_t, y in zip(us, ys):
        x_prior = x + u_t
        sigma_prior = sigma + params.process_var
        k = sigma_prior / (sigma_prior + params.measurement_var)
        x = x_prior + k * (y - x_prior)
        sigma = (1.0 - k) * sigma_prior
        record = stepper.step(u_t, np.array([y]))
        assert record.x_post == pytest.approx(x, abs=1e-12)
        assert record.variance == pytest.approx(sigma, abs=1e-12)
        assert record.gains.shape == (1, 1)


def test_ekf_matches_linear_kalman_filter_over_full_day():
    rng = np.random.default_rng(7)
    steps = 5040
    slope = np.array([-0.03, -0.02, -0.01])
    offset = np.array([14.0, 13.0, 12.0])
    truth = np.clip(200.0 + np.cumsum(rng.normal(0.0, 2.0, steps)), 100.0, 300.0)
    control = rng.normal(0.0, 1.0, steps)
    control[0] = 0.0
    measurements = slope[:, None] * truth + offset[:, None] + rng.normal(0.0, 1.0, (3, steps))
    params = EkfParams()

    stepper = EkfStepper(LinearMeasurement(slope, offset), params, q_max=1e12)
    means = np.zeros(steps)
    variances = np.zeros(steps)
    for t in range(steps):
        record = stepper.step(control[t], measurements[:, t])
        means[t], variances[t] = record.x_post, record.variance

    oracle_means, oracle_vars = LinearKalmanFilter(slope, offset, params).run(measurements, control)
    assert np.all(means > 0.0)
    np.testing.assert_allclose(means, oracle_means, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(variances, oracle_vars, rtol=1e-9, atol=1e-9)


def test_ekf_params_reject_non_positive_variance():
    with pytest.raises(ConfigError):
        EkfParams(process_var=0.0)


# ========== 整日运行 ==========

def test_free_flow_day_stays_at_zero():
    day = _free_flow_day()
    for variant, net in (("qekf", None), ("qnet", GainNet(seed=6)), ("qnet_no_u", GainNet(seed=6))):
        for mode in ("offline", "online"):
            trace = run_day(day, GEOMETRY, REGIMES, variant, gain_net=net, mode=mode)
            assert trace.steps == day.steps
            assert not trace.posterior_m.any()


def test_run_day_is_deterministic():
    day = _synthetic_day(seed=8)
    traces = [run_day(day, GEOMETRY, REGIMES, "qnet", gain_net=GainNet(seed=9)) for _ in range(2)]
    assert np.array_equal(traces[0].posterior_m, traces[1].posterior_m)
    assert np.array_equal(traces[0].prior_m, traces[1].prior_m)
    assert traces[0].within_bounds(GEOMETRY.q_max_m)


def test_qnet_no_u_uses_zero_control():
    trace = run_day(_synthetic_day(seed=10), GEOMETRY, REGIMES, "qnet_no_u", gain_net=GainNet(seed=11))
    assert not trace.control_u.any()


def test_qekf_trace_records_variances():
    trace = run_day(_synthetic_day(seed=12), GEOMETRY, REGIMES, "qekf")
    assert trace.variances is not None and trace.variances.shape == (trace.steps,)
    assert np.all(trace.variances > 0.0)
    assert trace.within_bounds(GEOMETRY.q_max_m)


def test_online_mode_is_causal():
    day = _synthetic_day(seed=13, steps=240)
    cut = 126
    inflow = day.cum_inflow.copy()
    outflow = day.cum_outflow.copy()
    inflow[cut:] += 50.0
    afcd = day.afcd_speeds.copy()
    afcd[:, cut // 6:] = 2.5
    altered = SensorDay(T0, inflow, outflow, afcd)

    net = GainNet(seed=14)
    a = run_day(day, GEOMETRY, REGIMES, "qnet", gain_net=net, mode="online")
    b = run_day(altered, GEOMETRY, REGIMES, "qnet", gain_net=net, mode="online")
    assert np.array_equal(a.posterior_m[:cut], b.posterior_m[:cut])
    assert not np.array_equal(a.posterior_m[cut:], b.posterior_m[cut:])


def test_streaming_equals_batch_online_bit_exact():
    day = _synthetic_day(seed=15, steps=180)
    net = GainNet(seed=16)
    batch = run_day(day, GEOMETRY, REGIMES, "qnet", gain_net=net, mode="online")
    stream = StreamingEstimator(GEOMETRY, REGIMES, "qnet", gain_net=net)
    posteriors = []
    for k in range(day.steps):
        afcd = day.afcd_speeds[:, k // 6] if k % 6 == 0 else None
        posteriors.append(stream.push(day.cum_inflow[k], day.cum_outflow[k], afcd).x_post)
    assert np.array_equal(np.array(posteriors), batch.posterior_m)


def test_streaming_causal_imputation():
    stream = StreamingEstimator(GEOMETRY, REGIMES, "qekf")
    stream.push(0.0, 0.0, [np.nan, 12.0, np.nan, 10.0, 9.0])
    np.testing.assert_array_equal(stream.current_speeds, [14.0, 12.0, 14.0, 10.0, 9.0])
    stream.push(0.0, 0.0)
    stream.push(1.0, 0.0, [5.0, np.nan, np.nan, np.nan, np.nan])
    np.testing.assert_array_equal(stream.current_speeds, [5.0, 12.0, 14.0, 10.0, 9.0])
    assert stream.steps == 3
    with pytest.raises(AlignmentError):
        stream.push(0.0, 0.0)


def test_numeric_failure_keeps_partial_trace():
    day = _free_flow_day()
    afcd = day.afcd_speeds.copy()
    afcd[2, 2] = np.inf
    broken = SensorDay(T0, day.cum_inflow, day.cum_outflow, afcd)
    with pytest.raises(FilterRunError) as info:
        run_day(broken, GEOMETRY, REGIMES, "qnet", gain_net=GainNet(seed=17))
    assert info.value.step == 12
    assert info.value.trace.steps == 12


def test_learned_variant_needs_three_segments():
    geometry = SectionGeometry.uniform("tiny", 100.0, 1, 2)
    with pytest.raises(GroupingError):
        make_stepper("qnet", MeasurementModel(geometry, REGIMES), GainNet())


def test_make_stepper_rejects_bad_configuration():
    with pytest.raises(ConfigError):
        make_stepper("kalman", MODEL)
    with pytest.raises(ConfigError):
        make_stepper("qnet", MODEL, gain_net=None)


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
