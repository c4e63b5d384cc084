# from __future__ import annotations  # FastMCP 需要实际的类型对象

import asyncio
import io
import logging
import os
import sys
from typing import Annotated, Any, Dict, List, Optional

try:
    from mcp.server.fastmcp import FastMCP, ToolError
except ImportError:
    # 兼容旧版本 fastmcp：只有 FastMCP，没有 ToolError
    from mcp.server.fastmcp import FastMCP

    class ToolError(RuntimeError):
        """Fallback ToolError for 旧版本 MCP。"""
        pass

from .server import (
    estimate_queue as _estimate_queue,
    evaluate_estimates as _evaluate_estimates,
    fit_speed_regimes as _fit_speed_regimes,
    simulate_scenario as _simulate_scenario,
)

# 配置日志到 UTF-8 stderr，避免干扰 MCP 协议的 stdout
utf8_stderr = io.TextIOWrapper(
    sys.stderr.buffer, encoding="utf-8", errors="replace", line_buffering=True
)

logging.basicConfig(
    level=os.getenv("QNET_LOG_LEVEL", "INFO").upper(),
    format="[%(asctime)s] [%(name)s] [%(levelname)s] %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
    stream=utf8_stderr,
    force=True,
)

app = FastMCP("queue-net")


@app.tool()
async def simulate_scenario(
    scenario: Annotated[Optional[Dict[str, Any]], "可选，场景配置（section / demand / signal / lambda_unobserved / 噪声等），缺省为默认 5 段路段"] = None,
    days: Annotated[int, "连续仿真天数"] = 1,
    seed: Annotated[Optional[int], "可选，随机种子；第 i 天使用 seed + i"] = None,
    output_dir: Annotated[Optional[str], "输出根目录（默认 QNET_OUTPUT_DIR 或 output），文件写到其下 mcp/"] = None,
) -> dict:
    """
    仿真信号交叉口排队，生成 counts.csv / afcd.csv / truth.csv 与 section.json。

    返回每一天的文件路径、工作日 / 周末标签与最大真值排队长度。
    """
    if days < 1:
        raise ToolError("days 必须 ≥ 1")

    result = await asyncio.to_thread(
        _simulate_scenario,
        scenario=scenario,
        days=days,
        seed=seed,
        output_dir=output_dir,
    )

    if not result.get("ok"):
        raise ToolError(result.get("error") or "仿真失败")

    return result


@app.tool()
async def fit_speed_regimes(
    afcd_paths: Annotated[List[str], "一个或多个 afcd.csv 路径"],
    n_segments: Annotated[Optional[int], "可选，分段数（用于校验 segment_index）"] = None,
    histogram_path: Annotated[Optional[str], "可选，直方图 CSV 输出路径"] = None,
) -> dict:
    """从 aFCD 速度直方图的两个主峰估计 v_free / v_jam（m/s）。"""
    if not afcd_paths:
        raise ToolError("afcd_paths 不能为空")

    result = await asyncio.to_thread(
        _fit_speed_regimes,
        afcd_paths=afcd_paths,
        n_segments=n_segments,
        histogram_path=histogram_path,
    )

    if not result.get("ok"):
        raise ToolError(result.get("error") or "速度状态估计失败")

    return result


@app.tool()
async def estimate_queue(
    counts_path: Annotated[str, "counts.csv 路径"],
    afcd_path: Annotated[str, "afcd.csv 路径"],
    section_path: Annotated[str, "路段配置 JSON（可含 v_free / v_jam）"],
    variant: Annotated[str, "qnet / qnet_no_u / qekf"] = "qekf",
    checkpoint_path: Annotated[Optional[str], "学习型变体的检查点路径"] = None,
    mode: Annotated[str, "offline 或 online"] = "offline",
    output_path: Annotated[Optional[str], "可选，estimate.csv 输出路径"] = None,
) -> dict:
    """
    对一天的线圈计数与 aFCD 运行排队长度估计，写出 t_iso,prior_m,posterior_m。

    注意：qnet / qnet_no_u 需要训练好的检查点（qnet train 生成）。
    """
    result = await asyncio.to_thread(
        _estimate_queue,
        counts_path=counts_path,
        afcd_path=afcd_path,
        section_path=section_path,
        variant=variant,
        checkpoint_path=checkpoint_path,
        mode=mode,
        output_path=output_path,
    )

    if not result.get("ok"):
        raise ToolError(result.get("error") or "估计失败")

    return result


@app.tool()
async def evaluate_estimates(
    truth_path: Annotated[str, "truth.csv 路径"],
    estimates: Annotated[Optional[Dict[str, str]], "{方法名: estimate.csv 路径}"] = None,
    include_baselines: Annotated[bool, "是否加入 OSD / ISC 对照"] = False,
    counts_path: Annotated[Optional[str], "对照方法需要的 counts.csv"] = None,
    afcd_path: Annotated[Optional[str], "对照方法需要的 afcd.csv"] = None,
    section_path: Annotated[Optional[str], "对照方法需要的路段配置"] = None,
    report_path: Annotated[Optional[str], "可选，报告 CSV 输出路径"] = None,
) -> dict:
    """计算全天与早晚高峰的 RMSE / MAE / MAPE（真值 ≤ 10 m 的步不计入 MAPE）。"""
    result = await asyncio.to_thread(
        _evaluate_estimates,
        truth_path=truth_path,
        estimates=estimates or {},
        include_baselines=include_baselines,
        counts_path=counts_path,
        afcd_path=afcd_path,
        section_path=section_path,
        report_path=report_path,
    )

    if not result.get("ok"):
        raise ToolError(result.get("error") or "评估失败")

    return result


def main() -> None:
    """MCP stdio 入口。"""
    if len(sys.argv) > 1 and sys.argv[1] == "--test":
        print("MCP 服务器测试模式：服务器已就绪，等待 MCP 客户端连接...", file=sys.stderr)
        print("按 Ctrl+C 退出测试模式。", file=sys.stderr)

    # 启动 MCP 服务器（会阻塞等待 stdin 输入）
    app.run()


if __name__ == "__main__":
    main()
