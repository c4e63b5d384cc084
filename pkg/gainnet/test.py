"""
增益网络测试脚本

使用方法：
1. 在 gainnet 目录内运行：python test.py
2. 从项目根目录运行：python -m gainnet.test
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# 添加父目录到路径（如果在 gainnet 目录内运行）
if Path(__file__).parent.name == 'gainnet':
    sys.path.insert(0, str(Path(__file__).parent.parent))

from core.exceptions import ConfigError, GroupingError
from gainnet import (
    FeatureScale,
    GainFeatures,
    GainNet,
    GainNetConfig,
    GainNetState,
    build_groups,
    group_indices,
    grouped_update,
    parameter_count,
)
from neural import Tape, check_gradients, ops

SCALE = FeatureScale(q_max=300.0, v_free=14.0)


def _features(n_segments, seed=0):
    rng = np.random.default_rng(seed)
    groups = n_segments - 2
    return GainFeatures(
        d_meas=rng.normal(size=(groups, 3)),
        d_innov=rng.normal(scale=3.0, size=(groups, 3)),
        d_evol=float(rng.normal(scale=10.0)),
        d_update=float(rng.normal(scale=5.0)),
    )


def _random_state(net, groups, seed=1):
    rng = np.random.default_rng(seed)
    tape = Tape(net.store, record=False)
    c = net.config
    return GainNetState(
        tape.constant(rng.uniform(-0.5, 0.5, size=(groups, c.q_hidden))),
        tape.constant(rng.uniform(-0.5, 0.5, size=(groups, c.sigma_hidden))),
        tape.constant(rng.uniform(-0.5, 0.5, size=(groups, c.s_hidden))),
    )


# ========== 分组 ==========

def test_build_groups_five_segments():
    y_t = np.array([10.0, 9.0, 8.0, 7.0, 6.0])
    groups = build_groups(y_t, y_t + 1.0, y_t - 2.0, 5)
    assert [g[0] for g in groups] == [1, 2, 3]
    for _, d_meas, d_innov in groups:
        assert d_meas.shape == (3,) and d_innov.shape == (3,)
        np.testing.assert_array_equal(d_meas, -np.ones(3))
        np.testing.assert_array_equal(d_innov, 2.0 * np.ones(3))


def test_build_groups_equal_vectors_give_zero_features():
    y = np.array([3.0, 4.0, 5.0, 6.0])
    for _, d_meas, d_innov in build_groups(y, y, y, 4):
        assert not d_meas.any() and not d_innov.any()


def test_build_groups_three_segments_single_group():
    groups = build_groups([1.0, 2.0, 3.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0], 3)
    assert len(groups) == 1
    np.testing.assert_array_equal(groups[0][1], [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(groups[0][2], [0.0, 1.0, 2.0])


def test_build_groups_too_short_section():
    with pytest.raises(GroupingError):
        build_groups([1.0, 2.0], [1.0, 2.0], [1.0, 2.0], 2)
    with pytest.raises(GroupingError):
        group_indices(1)


def test_group_indices_layout():
    np.testing.assert_array_equal(group_indices(5), [[0, 1, 2], [1, 2, 3], [2, 3, 4]])


# ========== 分组更新 ==========

def test_grouped_update_zero_gains():
    assert grouped_update(42.0, np.zeros((3, 3)), np.ones((3, 3))) == 42.0


def test_grouped_update_single_group():
    assert grouped_update(10.0, np.array([[0.0, 1.0, 0.0]]), np.array([[5.0, -2.0, 7.0]])) == 8.0


def test_grouped_update_matches_brute_force_sum():
    rng = np.random.default_rng(3)
    gains = rng.normal(size=(3, 3))
    innov = rng.normal(size=(3, 3))
    expected = 25.0
    for g in range(3):
        for k in range(3):
            expected += gains[g, k] * innov[g, k]
    assert grouped_update(25.0, gains, innov) == pytest.approx(expected, abs=1e-12)


def test_grouped_update_is_linear_in_innovations():
    rng = np.random.default_rng(4)
    gains = rng.normal(size=(4, 3))
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    combined = grouped_update(0.0, gains, 2.0 * a - 3.0 * b)
    separate = 2.0 * grouped_update(0.0, gains, a) - 3.0 * grouped_update(0.0, gains, b)
    assert combined == pytest.approx(separate, abs=1e-9)


# ========== 参数量 ==========

def test_default_parameter_count_within_budget():
    net = GainNet()
    assert net.parameter_count == parameter_count(GainNetConfig()) == net.store.audit()
    assert net.parameter_count <= 1000


def test_doubling_hidden_size_follows_formula():
    base = GainNetConfig()
    doubled = GainNetConfig(s_hidden=2 * base.s_hidden)
    assert GainNet(doubled).parameter_count == parameter_count(doubled)
    assert parameter_count(doubled) > parameter_count(base)


def test_zero_width_config_rejected():
    with pytest.raises(ConfigError):
        GainNetConfig(q_hidden=0)


# ========== 前向 ==========

def _zero_weights(net):
    for name in net.store.names():
        if name.endswith(".weight") or ".W_" in name or ".U_" in name:
            net.store.view(name)[:] = 0.0


def test_zero_weights_gain_equals_output_bias():
    net = GainNet(seed=2)
    _zero_weights(net)
    features = _features(5)
    state = net.initial_state(3, Tape(net.store, record=False))
    gains, _ = net.compute_gain(features, state, SCALE)
    bias = net.store.view("d.out.bias")
    for row in gains:
        np.testing.assert_allclose(row, bias * SCALE.gain_scale, rtol=0, atol=1e-12)


def test_compute_gain_deterministic():
    features = _features(6, seed=8)
    results = []
    for _ in range(2):
        net = GainNet(seed=5)
        state = net.initial_state(4, Tape(net.store, record=False))
        gains, new_state = net.compute_gain(features, state, SCALE)
        results.append((gains, new_state.values()))
    assert np.array_equal(results[0][0], results[1][0])
    for key in results[0][1]:
        assert np.array_equal(results[0][1][key], results[1][1][key])


def _numpy_pipeline(net, features, state, scale):
    """不经过 Tape 的直线实现"""
    p = net.store.view

    def act(kind, v):
        return {"identity": v, "relu": np.maximum(v, 0.0), "tanh": np.tanh(v)}[kind]

    def fc(name, x):
        return act(net.blocks[name].activation, x @ p(f"{name}.weight").T + p(f"{name}.bias"))

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    def gru(name, x, h):
        z = sig(x @ p(f"{name}.W_z").T + p(f"{name}.b_z") + h @ p(f"{name}.U_z").T)
        r = sig(x @ p(f"{name}.W_r").T + p(f"{name}.b_r") + h @ p(f"{name}.U_r").T)
        cand = np.tanh(x @ p(f"{name}.W_h").T + p(f"{name}.b_h") + (r * h) @ p(f"{name}.U_h").T)
        return (1.0 - z) * h + z * cand

    groups = features.n_groups
    dx_update = np.full((groups, 1), features.d_update / scale.q_max)
    dx_evol = np.full((groups, 1), features.d_evol / scale.q_max)
    meas = np.concatenate([features.d_meas, features.d_innov], axis=1) / scale.v_free
    values = state.values()
    q_hat = gru("a.gru", fc("a.fc", dx_update), values["gru_hidden_q"])
    sigma = gru("b.gru", np.concatenate([q_hat, fc("b.fc", dx_evol)], axis=1), values["gru_hidden_sigma"])
    s_in = np.concatenate([fc("c.fc_sigma", sigma), fc("c.fc_meas", meas)], axis=1)
    s_hat = gru("c.gru", s_in, values["gru_hidden_s"])
    gain = fc("d.out", fc("d.fc", np.concatenate([sigma, s_hat], axis=1)))
    sigma_h = fc("e.out", np.concatenate([sigma, fc("e.fc", np.concatenate([gain, s_hat], axis=1))], axis=1))
    return gain * scale.gain_scale, q_hat, sigma_h, s_hat


def test_pipeline_matches_straight_line_implementation():
    net = GainNet(seed=13)
    features = _features(7, seed=14)
    state = _random_state(net, 5)
    gains, new_state = net.compute_gain(features, state, SCALE)
    exp_gain, exp_q, exp_sigma_h, exp_s = _numpy_pipeline(net, features, state, SCALE)
    np.testing.assert_allclose(gains, exp_gain, rtol=0, atol=1e-12)
    np.testing.assert_allclose(new_state.gru_hidden_q.value, exp_q, rtol=0, atol=1e-12)
    np.testing.assert_allclose(new_state.sigma_h.value, exp_sigma_h, rtol=0, atol=1e-12)
    np.testing.assert_allclose(new_state.gru_hidden_s.value, exp_s, rtol=0, atol=1e-12)


def test_group_order_permutation_invariance():
    net = GainNet(seed=17)
    features = _features(7, seed=18)
    state = _random_state(net, 5, seed=19)
    perm = np.array([3, 0, 4, 1, 2])
    gains, new_state = net.compute_gain(features, state, SCALE)

    tape = Tape(net.store, record=False)
    values = state.values()
    permuted_state = GainNetState(*(tape.constant(values[k][perm])
                                    for k in ("gru_hidden_q", "gru_hidden_sigma", "gru_hidden_s")))
    permuted = GainFeatures(features.d_meas[perm], features.d_innov[perm], features.d_evol, features.d_update)
    gains_p, state_p = net.compute_gain(permuted, permuted_state, SCALE)
    np.testing.assert_allclose(gains_p, gains[perm], rtol=0, atol=1e-12)
    np.testing.assert_allclose(state_p.sigma_h.value, new_state.sigma_h.value[perm], rtol=0, atol=1e-12)


def test_same_parameters_run_on_five_and_eight_segments():
    net = GainNet(seed=23)
    shapes = {name: net.store.shape(name) for name in net.store.names()}
    for n in (5, 8):
        state = net.initial_state(n - 2, Tape(net.store, record=False))
        gains, _ = net.compute_gain(_features(n, seed=n), state, SCALE)
        assert gains.shape == (n - 2, 3)
    assert shapes == {name: net.store.shape(name) for name in net.store.names()}


def test_gain_network_gradient_check():
    net = GainNet(seed=29)
    steps = [_features(5, seed=30 + k) for k in range(4)]

    def loss_fn(tape):
        state = net.initial_state(3, tape)
        total = None
        for features in steps:
            gains, state = net.forward(features.d_meas, features.d_innov, features.d_evol,
                                       features.d_update, state, tape, SCALE)
            term = ops.reduce_sum(ops.square(ops.scale(ops.rowwise_dot(gains, features.d_innov), 0.01)))
            total = term if total is None else ops.add(total, term)
        return total

    report = check_gradients(loss_fn, net.store, n_params=50, rng=np.random.default_rng(31))
    assert report.passed(1e-4), report.max_rel_error


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
