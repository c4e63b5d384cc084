"""
只使用 aFCD 的速度阈值对照方法：OSD 与 ISC
"""

from .isc import (
    ISC_GRID_M,
    ISC_THRESHOLDS_KMH,
    contour_positions,
    isc_day,
    isc_estimate,
    speed_field,
)
from .osd import OSD_THRESHOLD_KMH, osd_day, osd_estimate, osd_series

BASELINES = {
    "osd": osd_day,
    "isc": isc_day,
}

__all__ = [
    "OSD_THRESHOLD_KMH",
    "osd_estimate",
    "osd_series",
    "osd_day",
    "ISC_THRESHOLDS_KMH",
    "ISC_GRID_M",
    "speed_field",
    "contour_positions",
    "isc_estimate",
    "isc_day",
    "BASELINES",
]
