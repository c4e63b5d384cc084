"""
神经网络原语测试脚本

使用方法：
1. 在 neural 目录内运行：python test.py
2. 从项目根目录运行：python -m neural.test
3. 或使用 pytest：pytest neural/test.py
"""
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

# 添加父目录到路径（如果在 neural 目录内运行）
if Path(__file__).parent.name == 'neural':
    sys.path.insert(0, str(Path(__file__).parent.parent))

from neural import (
    DenseLayer,
    DimensionError,
    GruCell,
    ParameterStore,
    Tape,
    TapeError,
    adam_step,
    check_gradients,
    fc_forward,
    gru_forward,
    ops,
    read_checkpoint,
    restore_parameters,
    save_checkpoint,
)
from neural.exceptions import CheckpointError, OptimizerError


def _store(*blocks, seed=None):
    store = ParameterStore()
    rng = np.random.default_rng(seed) if seed is not None else None
    for block in blocks:
        block.register(store, rng)
    return store


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


# ========== 全连接 ==========

def test_fc_identity_weights():
    layer = DenseLayer("fc", 3, 3)
    store = _store(layer)
    store.view(layer.weight_name)[:] = np.eye(3)
    x = np.array([1.5, -2.0, 0.25])
    out = fc_forward(layer, x, Tape(store, record=False))
    assert np.array_equal(out.value, x)


def test_fc_zero_weights_returns_activation_of_bias():
    layer = DenseLayer("fc", 2, 3, activation="relu")
    store = _store(layer)
    store.view(layer.bias_name)[:] = [-1.0, 0.5, 2.0]
    out = fc_forward(layer, np.array([7.0, -3.0]), Tape(store, record=False))
    assert np.array_equal(out.value, [0.0, 0.5, 2.0])


def test_fc_matches_naive_matmul():
    layer = DenseLayer("fc", 4, 3)
    store = _store(layer, seed=3)
    x = np.random.default_rng(4).normal(size=4)
    w = store.view(layer.weight_name)
    b = store.view(layer.bias_name)
    expected = np.zeros(3)
    for i in range(3):
        total = 0.0
        for k in range(4):
            total += w[i, k] * x[k]
        expected[i] = total + b[i]
    out = fc_forward(layer, x, Tape(store, record=False))
    np.testing.assert_allclose(out.value, expected, rtol=0, atol=1e-12)


def test_fc_dimension_mismatch():
    layer = DenseLayer("fc", 3, 2)
    store = _store(layer)
    with pytest.raises(DimensionError):
        fc_forward(layer, np.zeros(4), Tape(store))


# ========== GRU ==========

def test_gru_zero_parameters_halves_hidden():
    cell = GruCell("gru", 2, 3)
    store = _store(cell)
    h = np.array([0.4, -1.2, 2.0])
    out = gru_forward(cell, np.array([5.0, -5.0]), h, Tape(store, record=False))
    np.testing.assert_array_equal(out.value, 0.5 * h)


def test_gru_init_bounds_follow_fan_in():
    cell = GruCell("gru", 2, 16)
    store = _store(cell, seed=3)
    for gate in ("z", "r", "h"):
        w = store.view(cell.param_name("W", gate))
        u = store.view(cell.param_name("U", gate))
        b = store.view(cell.param_name("b", gate))
        assert np.abs(w).max() <= np.sqrt(1.0 / 2)
        assert np.abs(w).max() > 0.25
        assert np.abs(u).max() <= 0.25 and np.abs(b).max() <= 0.25


def test_gru_all_zero_stays_zero():
    cell = GruCell("gru", 2, 3)
    store = _store(cell)
    out = gru_forward(cell, np.zeros(2), np.zeros(3), Tape(store, record=False))
    assert np.array_equal(out.value, np.zeros(3))


def test_gru_matches_scalar_oracle():
    cell = GruCell("gru", 3, 4)
    store = _store(cell, seed=11)
    rng = np.random.default_rng(12)
    x = rng.normal(size=3)
    h = rng.uniform(-1, 1, size=4)
    p = {name: store.view(name) for name in store.names()}

    def pre(gate, state, j):
        total = p[f"gru.b_{gate}"][j]
        for k in range(3):
            total += p[f"gru.W_{gate}"][j, k] * x[k]
        for k in range(4):
            total += p[f"gru.U_{gate}"][j, k] * state[k]
        return total

    r = np.array([_sigmoid(pre("r", h, j)) for j in range(4)])
    expected = np.zeros(4)
    for j in range(4):
        z = _sigmoid(pre("z", h, j))
        candidate = np.tanh(pre("h", r * h, j))
        expected[j] = (1.0 - z) * h[j] + z * candidate

    out = gru_forward(cell, x, h, Tape(store, record=False))
    np.testing.assert_allclose(out.value, expected, rtol=0, atol=1e-12)


def test_gru_batched_rows_are_independent():
    cell = GruCell("gru", 2, 3)
    store = _store(cell, seed=5)
    rng = np.random.default_rng(6)
    xs = rng.normal(size=(4, 2))
    hs = rng.uniform(-1, 1, size=(4, 3))
    batched = gru_forward(cell, xs, hs, Tape(store, record=False)).value
    for g in range(4):
        single = gru_forward(cell, xs[g], hs[g], Tape(store, record=False)).value
        np.testing.assert_allclose(batched[g], single, rtol=0, atol=1e-14)


# ========== 反向传播 ==========

def test_backward_identity_layer_weight_gradient():
    layer = DenseLayer("fc", 3, 2)
    store = _store(layer, seed=1)
    x = np.array([0.5, -1.0, 2.0])
    tape = Tape(store)
    loss = ops.reduce_sum(fc_forward(layer, x, tape))
    grads = tape.backward(loss)
    start, stop = store.span(layer.weight_name)
    np.testing.assert_allclose(grads[start:stop].reshape(2, 3), np.outer(np.ones(2), x))
    start, stop = store.span(layer.bias_name)
    np.testing.assert_allclose(grads[start:stop], np.ones(2))


def test_backward_zero_seed_gives_zero_gradients():
    layer = DenseLayer("fc", 3, 2, activation="relu")
    store = _store(layer, seed=2)
    tape = Tape(store)
    out = fc_forward(layer, np.array([1.0, 2.0, 3.0]), tape)
    grads = tape.backward(out, seed=np.zeros(2))
    assert np.all(grads == 0.0)


def test_backward_before_forward_raises():
    store = _store(DenseLayer("fc", 1, 1))
    tape = Tape(store)
    with pytest.raises(TapeError):
        tape.backward(Tape(store).constant(1.0))
    inference = Tape(store, record=False)
    node = fc_forward(DenseLayer("fc", 1, 1), np.ones(1), inference)
    with pytest.raises(TapeError):
        inference.backward(node)


def test_backward_visits_every_node_once():
    cell = GruCell("gru", 2, 2)
    store = _store(cell, seed=9)
    tape = Tape(store)
    h = np.zeros(2)
    for _ in range(3):
        h = gru_forward(cell, np.ones(2), h, tape)
    loss = ops.reduce_sum(ops.square(h))
    tape.backward(loss)
    assert tape.backward_visits == len(tape.nodes)


def test_input_gradient_available_for_chaining():
    layer = DenseLayer("fc", 2, 1)
    store = _store(layer)
    store.view(layer.weight_name)[:] = [[3.0, -2.0]]
    tape = Tape(store)
    x = tape.variable(np.array([1.0, 1.0]))
    tape.backward(ops.reduce_sum(fc_forward(layer, x, tape)))
    np.testing.assert_allclose(tape.input_grad(x), [3.0, -2.0])


def test_gradient_check_fc_gru_composite():
    fc = DenseLayer("fc", 4, 5, activation="tanh")
    cell = GruCell("gru", 5, 3)
    store = _store(fc, cell, seed=21)
    rng = np.random.default_rng(22)
    inputs = [rng.normal(size=4) for _ in range(10)]

    def loss_fn(tape):
        h = np.zeros(3)
        for x in inputs:
            h = gru_forward(cell, fc_forward(fc, x, tape), h, tape)
        return ops.reduce_sum(ops.square(h))

    report = check_gradients(loss_fn, store, n_params=50, rng=np.random.default_rng(23))
    assert report.passed(1e-4), report.max_rel_error


def test_forward_backward_deterministic():
    def run():
        fc = DenseLayer("fc", 3, 4, activation="relu")
        cell = GruCell("gru", 4, 2)
        store = _store(fc, cell, seed=7)
        tape = Tape(store)
        h = gru_forward(cell, fc_forward(fc, np.array([0.1, 0.2, 0.3]), tape), np.zeros(2), tape)
        return h.value, tape.backward(ops.reduce_sum(h))

    (v1, g1), (v2, g2) = run(), run()
    assert np.array_equal(v1, v2)
    assert np.array_equal(g1, g2)


# ========== 参数存储 / Adam ==========

def test_parameter_count_audit():
    fc = DenseLayer("fc", 6, 8)
    cell = GruCell("gru", 8, 4)
    store = _store(fc, cell, seed=0)
    assert store.audit() == store.size == fc.parameter_count + cell.parameter_count
    assert cell.parameter_count == 3 * 4 * (8 + 4 + 1)


def test_adam_zero_gradient_leaves_parameters():
    store = _store(DenseLayer("fc", 3, 2), seed=1)
    before = store.snapshot()
    adam_step(store, np.zeros(store.size))
    assert np.array_equal(store.values, before)


def test_adam_first_step_hand_oracle():
    store = _store(DenseLayer("fc", 1, 1))
    g = np.array([0.3, -4.0])
    adam_step(store, g, lr=0.01)
    expected = -0.01 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(store.values, expected, rtol=1e-12)


def test_adam_constant_gradient_moves_against_sign():
    store = _store(DenseLayer("fc", 1, 1))
    g = np.array([0.5, -2.0])
    for _ in range(100):
        adam_step(store, g, lr=1e-3)
    np.testing.assert_allclose(store.values, [-0.1, 0.1], rtol=1e-6)


def test_adam_rejects_non_finite_gradient():
    fc = DenseLayer("fc", 2, 2)
    store = _store(fc)
    grads = np.zeros(store.size)
    start, _ = store.span(fc.bias_name)
    grads[start] = np.nan
    with pytest.raises(OptimizerError) as info:
        adam_step(store, grads)
    assert info.value.bad_slices == [fc.bias_name]


def test_adam_rejects_wrong_length():
    store = _store(DenseLayer("fc", 2, 2))
    with pytest.raises(DimensionError):
        adam_step(store, np.zeros(store.size + 1))


# ========== 检查点 ==========

def test_checkpoint_restores_exact_values():
    fc = DenseLayer("fc", 3, 2)
    store = _store(fc, seed=31)
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint(Path(tmp) / "ckpt.json", store, {"kind": "test"})
        payload = read_checkpoint(path)
        fresh = _store(DenseLayer("fc", 3, 2))
        restore_parameters(fresh, payload)
    assert payload["config"] == {"kind": "test"}
    assert np.array_equal(fresh.values, store.values)


def test_checkpoint_dimension_mismatch_fails_loudly():
    store = _store(DenseLayer("fc", 3, 2), seed=31)
    with tempfile.TemporaryDirectory() as tmp:
        payload = read_checkpoint(save_checkpoint(Path(tmp) / "ckpt.json", store, {}))
    with pytest.raises(CheckpointError):
        restore_parameters(_store(DenseLayer("fc", 4, 2)), payload)


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
