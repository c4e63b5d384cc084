"""
MCP 集成入口包：排队长度估计工具

本包仅做「薄封装」：
- 复用 `simulator` 生成仿真数据；
- 复用 `estimator` / `evaluation` 完成估计与评估；
- 通过 MCP 协议把这些能力暴露给上层。
"""

from .server import (
    estimate_queue,
    evaluate_estimates,
    fit_speed_regimes,
    simulate_scenario,
)

__all__ = [
    "simulate_scenario",
    "fit_speed_regimes",
    "estimate_queue",
    "evaluate_estimates",
]
