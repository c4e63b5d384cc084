"""
训练模块测试脚本

使用方法：
1. 在 training 目录内运行：python test.py
2. 从项目根目录运行：python -m training.test
"""
import sys
import tempfile
from datetime import datetime
from pathlib import Path

import numpy as np
import pytest

# 添加父目录到路径（如果在 training 目录内运行）
if Path(__file__).parent.name == 'training':
    sys.path.insert(0, str(Path(__file__).parent.parent))

from core.control import DEFAULT_K_FREE, DEFAULT_K_JAM
from core.exceptions import ConfigError, QueueNetDataError
from core.measurement import MeasurementModel
from core.models import SectionGeometry, SensorDay, SpeedRegimes
from estimator import QNetRecursion, prepare_offline_inputs, run_inputs
from gainnet import GainNet
from neural import Tape
from training import (
    DataSplit,
    TrainConfig,
    slice_windows,
    split_days,
    train,
    window_bounds,
    window_gradient,
    window_loss,
)

GEOMETRY = SectionGeometry.uniform("train-test", 300.0, 2, 5)
REGIMES = SpeedRegimes(v_free=14.0, v_jam=2.0)
MODEL = MeasurementModel(GEOMETRY, REGIMES)
T0 = datetime(2024, 3, 5, 6, 0)
FAST = dict(window_steps=30, boundary_window_steps=30)


def _day_from_truth(truth, seed=0, label=""):
    """按守恒关系由真值排队构造计数，aFCD 取区间平均排队的期望速度"""
    truth = np.asarray(truth, dtype=float)
    rng = np.random.default_rng(seed)
    m, length = GEOMETRY.lanes, GEOMETRY.length_m
    net = np.round(m * length * DEFAULT_K_FREE + truth * m * (DEFAULT_K_JAM - DEFAULT_K_FREE))
    inflow = np.cumsum(rng.integers(6, 9, truth.size)).astype(float) + net.max()
    outflow = inflow - net
    intervals = truth.reshape(-1, 6).mean(axis=1)
    afcd = np.stack([MODEL.expected_speeds(q) for q in intervals], axis=1)
    return SensorDay(T0, inflow, outflow, afcd, ground_truth_m=truth, label=label)


def _wave_day(seed=0, steps=180):
    t = np.arange(steps)
    truth = np.clip(120.0 + 100.0 * np.sin(2 * np.pi * t / 90.0 + seed), 0.0, 300.0)
    return _day_from_truth(truth, seed=seed, label=f"wave-{seed}")


# ========== 窗口 ==========

def test_full_day_yields_84_windows():
    assert len(window_bounds(5040, 60)) == 84


def test_window_bounds_drop_partial_tail():
    assert window_bounds(130, 60) == [(0, 60), (60, 120)]
    with pytest.raises(QueueNetDataError):
        window_bounds(30, 60)


def test_window_initial_states_follow_inference_posteriors():
    day = _wave_day(seed=1)
    net = GainNet(seed=2)
    inputs = prepare_offline_inputs(day, GEOMETRY, "qnet", boundary_window_steps=30)
    windows = slice_windows(inputs, QNetRecursion(net, MODEL, clamp=False), 30)
    trace = run_inputs(inputs, MODEL, "qnet", gain_net=net)
    assert len(windows) == 6
    assert windows[0].carry.x_value == 0.0
    assert not windows[0].carry.gain_state.values()["gru_hidden_q"].any()
    for window in windows[1:]:
        assert window.carry.x_value == trace.posterior_m[window.start - 1]


# ========== 损失 ==========

def test_window_loss_zero_for_exact_estimates():
    assert window_loss([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0


def test_window_loss_hand_value():
    assert window_loss([3.0, 4.0], [0.0, 0.0]) == pytest.approx(3.5355339059, abs=1e-9)


def test_window_loss_constant_offset():
    truth = np.linspace(0.0, 50.0, 11)
    assert window_loss(truth - 7.5, truth) == pytest.approx(7.5, abs=1e-12)


def test_window_loss_node_matches_array():
    tape = Tape()
    est = tape.variable(np.array([3.0, 4.0, 1.0]))
    node = window_loss(est, [0.0, 1.0, 1.0])
    assert float(node.value) == pytest.approx(window_loss([3.0, 4.0, 1.0], [0.0, 1.0, 1.0]))


def test_window_loss_rejects_empty_window():
    with pytest.raises(QueueNetDataError):
        window_loss([], [])


# ========== 梯度 ==========

def test_gradient_reaches_every_parameter_slice():
    day = _wave_day(seed=3)
    net = GainNet(seed=4)
    recursion = QNetRecursion(net, MODEL, clamp=False)
    inputs = prepare_offline_inputs(day, GEOMETRY, "qnet", boundary_window_steps=30)
    touched = np.zeros(net.store.size)
    for window in slice_windows(inputs, recursion, 30)[:3]:
        _, grads = window_gradient(recursion, window, inputs, day.ground_truth_m)
        touched += np.abs(grads)
    dead = [name for name in net.store.names()
            if not touched[slice(*net.store.span(name))].any()]
    assert dead == []


# ========== 训练循环 ==========

def test_zero_learning_rate_keeps_parameters_and_flat_loss():
    day = _wave_day(seed=5)
    net = GainNet(seed=6)
    before = net.store.snapshot()
    result = train([day], [], GEOMETRY, REGIMES, TrainConfig(lr=0.0, epochs=2, **FAST), net=net)
    assert np.array_equal(net.store.values, before)
    assert len(result.history) == 2
    assert result.history[0].train_rmse == result.history[1].train_rmse


def test_training_is_deterministic():
    days = [_wave_day(seed=7)]
    config = TrainConfig(lr=1e-2, epochs=2, seed=11, **FAST)
    a = train(days, [], GEOMETRY, REGIMES, config)
    b = train(days, [], GEOMETRY, REGIMES, config)
    assert [(r.train_rmse, r.val_rmse) for r in a.history] == [(r.train_rmse, r.val_rmse) for r in b.history]
    assert np.array_equal(a.net.store.values, b.net.store.values)


def test_training_loss_drops_thirty_percent_within_twenty_epochs():
    days = [_wave_day(seed=s, steps=360) for s in range(3)]
    config = TrainConfig(lr=3e-3, epochs=20, patience=20, seed=0, **FAST)
    result = train(days, [], GEOMETRY, REGIMES, config, net=GainNet(seed=0))
    assert not result.diverged
    assert len(result.history) == 20
    first = result.history[0].train_rmse
    best = min(r.train_rmse for r in result.history)
    assert best <= 0.7 * first


def test_time_budget_stops_between_epochs():
    config = TrainConfig(lr=1e-2, epochs=5, time_budget_s=1e-6, **FAST)
    result = train([_wave_day(seed=12)], [], GEOMETRY, REGIMES, config)
    assert result.budget_exhausted
    assert len(result.history) == 1
    assert result.elapsed_s > 0.0
    unlimited = train([_wave_day(seed=12)], [], GEOMETRY, REGIMES, TrainConfig(lr=1e-2, epochs=2, **FAST))
    assert not unlimited.budget_exhausted and len(unlimited.history) == 2
    with pytest.raises(ConfigError):
        TrainConfig(time_budget_s=0.0)


def test_training_writes_loadable_checkpoint():
    config = TrainConfig(lr=1e-2, epochs=1, **FAST)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "qnet.json"
        result = train([_wave_day(seed=8)], [_wave_day(seed=9)], GEOMETRY, REGIMES, config,
                       checkpoint_path=path)
        assert result.checkpoint == path and path.exists()
        loaded = GainNet.load(path)
        assert np.array_equal(loaded.store.values, result.net.store.values)


def test_train_requires_ground_truth():
    day = _wave_day(seed=10).with_truth(None)
    with pytest.raises(QueueNetDataError):
        train([day], [], GEOMETRY, REGIMES, TrainConfig(epochs=1, **FAST))
    with pytest.raises(ConfigError):
        train([], [], GEOMETRY, REGIMES)


# ========== 配置与划分 ==========

def test_train_config_validation_and_round_trip():
    with pytest.raises(ConfigError):
        TrainConfig(window_steps=0)
    with pytest.raises(ConfigError):
        TrainConfig(lr=-1e-3)
    config = TrainConfig(lr=5e-4, epochs=7, clamp_in_training=True)
    assert TrainConfig.from_dict(config.to_dict()) == config


def test_split_days_balances_weekends():
    days = [_wave_day(seed=s, steps=60) for s in range(14)]
    weekend = [False] * 10 + [True] * 4
    split = split_days(days, weekend, validation_fraction=0.2, test_fraction=0.2, seed=3)
    assert split.sizes() == {"train": 8, "validation": 3, "test": 3}
    flags = {id(d): w for d, w in zip(days, weekend)}
    for part in (split.train, split.validation, split.test):
        assert any(flags[id(d)] for d in part)
        assert not all(flags[id(d)] for d in part)
    assert len({id(d) for d in split.train + split.validation + split.test}) == 14


def test_data_split_rejects_overlap():
    day = _wave_day(seed=0, steps=60)
    with pytest.raises(ConfigError):
        DataSplit(train=(day,), test=(day,))


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
