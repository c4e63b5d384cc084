"""
对照方法测试脚本

使用方法：
1. 在 baselines 目录内运行：python test.py
2. 从项目根目录运行：python -m baselines.test
"""
import sys
from datetime import datetime
from pathlib import Path

import numpy as np

# 添加父目录到路径（如果在 baselines 目录内运行）
if Path(__file__).parent.name == 'baselines':
    sys.path.insert(0, str(Path(__file__).parent.parent))

from baselines import (
    ISC_THRESHOLDS_KMH,
    contour_positions,
    isc_day,
    isc_estimate,
    osd_day,
    osd_estimate,
    speed_field,
)
from core.models import KMH_PER_MPS, SectionGeometry, SensorDay

THREE = SectionGeometry("three", 300.0, 2, ((0, 100), (100, 200), (200, 300)), 250.0)


def _kmh(values):
    return np.asarray(values, dtype=float) / KMH_PER_MPS


# ========== OSD ==========

def test_osd_finds_queue_tail_boundary():
    assert osd_estimate(_kmh([10, 20, 30]), THREE) == 100.0


def test_osd_free_flow_is_zero():
    assert osd_estimate(_kmh([30, 30, 30]), THREE) == 0.0


def test_osd_fully_queued_is_q_max():
    assert osd_estimate(_kmh([10, 10, 10]), THREE) == THREE.q_max_m


def test_osd_takes_farthest_transition():
    geometry = SectionGeometry.uniform("five", 500.0, 2, 5)
    assert osd_estimate(_kmh([8, 20, 9, 12, 40]), geometry) == 400.0


def test_osd_first_segment_fast_ignores_upstream_slowdown():
    assert osd_estimate(_kmh([30, 10, 10]), THREE) == 0.0


def test_osd_uniform_scaling_below_threshold_gives_q_max():
    speeds = _kmh([12, 25, 40])
    assert osd_estimate(speeds, THREE) == 100.0
    assert osd_estimate(speeds * 0.3, THREE) == THREE.q_max_m


def test_osd_day_imputes_missing_intervals():
    afcd = np.full((3, 2), 30 / KMH_PER_MPS)
    afcd[0, 1] = np.nan
    afcd[0, 0] = 10 / KMH_PER_MPS
    day = SensorDay(datetime(2024, 3, 4, 6), np.arange(12.0), np.zeros(12), afcd)
    estimate = osd_day(day, THREE)
    assert estimate.shape == (12,)
    assert (estimate == 100.0).all()


# ========== ISC ==========

def test_isc_uniform_free_flow_is_zero():
    geometry = SectionGeometry.uniform("free", 400.0, 2, 4)
    afcd = np.full((4, 10), 45 / KMH_PER_MPS)
    assert not isc_estimate(afcd, geometry, 60).any()


def test_isc_step_field_contour_near_150_m():
    geometry = SectionGeometry.uniform("step", 300.0, 2, 30)
    speeds = np.where(geometry.centers < 150.0, 10.0, 30.0)
    afcd = np.repeat(_kmh(speeds)[:, np.newaxis], 10, axis=1)
    positions, field = speed_field(afcd, geometry, 60)
    for threshold in ISC_THRESHOLDS_KMH:
        contour = contour_positions(positions, field, threshold)
        assert np.all(np.abs(contour - 150.0) <= 5.0 + 1e-9), threshold
    np.testing.assert_allclose(isc_estimate(afcd, geometry, 60), 150.0, atol=5.0)


def test_isc_isolated_patch_reaches_far_edge_while_present():
    geometry = SectionGeometry.uniform("patch", 500.0, 2, 10)
    afcd = np.full((10, 30), 40 / KMH_PER_MPS)
    afcd[4, 10:20] = 5 / KMH_PER_MPS
    estimate = isc_estimate(afcd, geometry, 180)
    assert 225.0 < estimate[90] <= 250.0
    assert estimate[10] == 0.0 and estimate[170] == 0.0


def test_isc_respects_q_max():
    geometry = SectionGeometry.uniform("jam", 300.0, 2, 3, q_max_m=200.0)
    afcd = np.full((3, 4), 5 / KMH_PER_MPS)
    np.testing.assert_array_equal(isc_estimate(afcd, geometry, 24), 200.0)


def test_isc_handles_single_interval_day():
    afcd = _kmh([[10.0], [30.0], [30.0]])
    day = SensorDay(datetime(2024, 3, 4, 6), np.zeros(6), np.zeros(6), afcd)
    estimate = isc_day(day, THREE)
    assert estimate.shape == (6,)
    assert np.all((estimate > 50.0) & (estimate < 150.0))


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
