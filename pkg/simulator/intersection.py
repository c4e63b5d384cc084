"""
单个信号交叉口进口道的点排队仿真

逐秒推进：到达（越过上游检测器）→ 未观测离开 → 绿灯按饱和流率放行 →
行驶中的车辆以 v_free 前进，到达队尾（红灯或队列非空）即入队，
绿灯且无排队时直接越过停车线。
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, replace
from datetime import timedelta
from typing import Iterable, List, Optional, Sequence

import numpy as np

from core.control import ReconstructionParams
from core.exceptions import ConfigError
from core.models import BASE_STEP_S, SensorDay
from .scenario import RateProfile, ScenarioConfig
from .sensors import emit_afcd, emit_counts, sample_cumulative

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EventLog:
    """
    逐车事件与逐秒状态

    arrival_s / departure_s / exit_s：越过上游检测器、越过停车线、未观测离开的时刻（s）；
    开始时已在路段内的车辆记为 0 s 到达。inside / queued：每秒末路段内 / 排队中的车辆数，
    由仿真过程独立计数（下标 0..horizon）。
    """
    arrival_s: np.ndarray
    departure_s: np.ndarray
    exit_s: np.ndarray
    inside: np.ndarray
    queued: np.ndarray

    def conservation_residual(self) -> np.ndarray:
        """A_t − D_t − E_t − inside_t，逐秒应为 0"""
        t = np.arange(self.inside.size, dtype=float)
        a = sample_cumulative(self.arrival_s, t)
        d = sample_cumulative(self.departure_s, t)
        e = sample_cumulative(self.exit_s, t)
        return a - d - e - self.inside


@dataclass(frozen=True)
class SimOutput:
    """仿真结果：对齐后的 SensorDay（含真值）与隐藏诊断量"""
    day: SensorDay
    events: EventLog
    queue_s: np.ndarray
    demand: RateProfile
    scenario: ScenarioConfig
    weekend: bool = False

    @property
    def lambda_c(self) -> float:
        """场景设定的日均未观测净离开率"""
        return self.scenario.lambda_unobserved.mean(self.scenario.horizon_s)

    @property
    def realized_lambda(self) -> float:
        return float(self.events.exit_s.size / self.scenario.horizon_s)

    @property
    def k_free(self) -> float:
        s = self.scenario
        net = self.demand.mean(s.horizon_s) - s.lambda_unobserved.mean(s.horizon_s)
        return max(net, 0.0) / (s.regimes.v_free * s.geometry.lanes)

    def reconstruction_params(self) -> ReconstructionParams:
        """真实 λ_c、k_jam 与非排队部分密度，用于守恒反演校验"""
        return ReconstructionParams(lambda_c=self.lambda_c, k_jam=self.scenario.k_jam, k_free=self.k_free)


def _event_counts(profile: RateProfile, horizon_s: int, stochastic: bool,
                  rng: np.random.Generator, rounding) -> np.ndarray:
    """每秒的事件数：随机模式为泊松抽样，确定性模式对累积期望量取整后差分"""
    if stochastic:
        return rng.poisson(profile.rate(np.arange(horizon_s) + 0.5))
    return np.diff(rounding(profile.cumulative(horizon_s) + 1e-9)).astype(int)


def _initial_transit(scenario: ScenarioConfig, demand: RateProfile) -> List[float]:
    """按起点处的净流率均匀铺设开始时已在路段内行驶的车辆（进入时刻 ≤ 0）"""
    net = float(demand.rate(0.0) - scenario.lambda_unobserved.rate(0.0))
    if net <= 0:
        return []
    headway = 1.0 / net
    travel = scenario.geometry.length_m / scenario.regimes.v_free
    count = int(np.ceil(travel / headway + 0.5))
    # 半个车头时距的偏移使铺设车辆数为 travel / headway 的四舍五入
    return [-headway * (i - 0.5) for i in range(count, 0, -1) if headway * (i - 0.5) < travel]


def simulate_day(scenario: ScenarioConfig, weekend: Optional[bool] = None,
                 label: Optional[str] = None) -> SimOutput:
    """
    仿真一天并生成传感器数据

    Args:
        scenario: 场景配置（含随机种子）
        weekend: 是否周末；缺省按 scenario.day 的星期判断，周末需求乘以 weekend_factor
        label: SensorDay 标签

    Returns:
        SimOutput
    """
    if weekend is None:
        weekend = scenario.day.weekday() >= 5
    demand = scenario.demand.scaled(scenario.weekend_factor) if weekend else scenario.demand
    horizon = scenario.horizon_s
    geometry, v_free = scenario.geometry, scenario.regimes.v_free
    lanes, length = geometry.lanes, geometry.length_m
    spacing = scenario.jam_spacing_m

    flow_seed, sensor_seed = np.random.SeedSequence(scenario.seed).spawn(2)
    flow_rng = np.random.default_rng(flow_seed)
    arrivals = _event_counts(demand, horizon, scenario.stochastic, flow_rng, np.floor)
    exits = _event_counts(scenario.lambda_unobserved, horizon, scenario.stochastic, flow_rng, np.round)

    transit = deque(_initial_transit(scenario, demand))
    arrival_log: List[float] = [0.0] * len(transit)
    departure_log: List[float] = []
    exit_log: List[float] = []
    inside = np.zeros(horizon + 1, dtype=int)
    queued_log = np.zeros(horizon + 1, dtype=int)
    inside[0] = len(transit)

    queued = 0
    capacity = 0.0
    pending_exits = 0
    discharge = scenario.saturation_flow * lanes

    for s in range(horizon):
        t = float(s + 1)
        green = scenario.signal.is_green(s)

        for _ in range(arrivals[s]):
            transit.append(t)
            arrival_log.append(t)

        pending_exits += exits[s]
        while pending_exits > 0 and (transit or queued):
            if transit:
                transit.pop()
            else:
                queued -= 1
            exit_log.append(t)
            pending_exits -= 1

        if green:
            capacity += discharge
            served = min(int(capacity), queued)
            queued -= served
            capacity -= served
            departure_log.extend([t] * served)
            if queued == 0:
                capacity -= np.floor(capacity)
        else:
            capacity = 0.0

        while transit:
            position = length - v_free * (t - transit[0])
            if queued > 0 or not green:
                if position > queued * spacing / lanes:
                    break
                transit.popleft()
                queued += 1
            else:
                if position > 0.0:
                    break
                transit.popleft()
                departure_log.append(t)

        inside[s + 1] = len(transit) + queued
        queued_log[s + 1] = queued

    queue_s = np.minimum(queued_log * spacing / lanes, geometry.q_max_m)
    events = EventLog(
        arrival_s=np.asarray(arrival_log, dtype=float),
        departure_s=np.asarray(departure_log, dtype=float),
        exit_s=np.asarray(exit_log, dtype=float),
        inside=inside,
        queued=queued_log,
    )

    steps = scenario.steps
    cum_in, cum_out = emit_counts(events.arrival_s, events.departure_s, steps)
    n_intervals = -(-steps * BASE_STEP_S // 60)
    afcd = emit_afcd(queue_s, scenario, n_intervals, rng=np.random.default_rng(sensor_seed))
    truth = queue_s[np.arange(steps) * BASE_STEP_S]
    day = SensorDay(scenario.t0, cum_in, cum_out, afcd, ground_truth_m=truth,
                    label=label or f"{geometry.section_id}-{scenario.day.isoformat()}-s{scenario.seed}")

    logger.info("仿真完成 %s: 到达 %d, 放行 %d, 未观测离开 %d, 最大排队 %.1f m",
                day.label, events.arrival_s.size, events.departure_s.size,
                events.exit_s.size, float(queue_s.max()))
    return SimOutput(day=day, events=events, queue_s=queue_s, demand=demand,
                     scenario=scenario, weekend=bool(weekend))


def simulate_days(scenario: ScenarioConfig, seeds: Iterable[int],
                  weekend: Optional[Sequence[bool]] = None) -> List[SimOutput]:
    """
    批量仿真连续多天：第 i 天日期为 scenario.day + i，种子为 seeds[i]

    weekend 缺省时按日期判断。
    """
    seeds = list(seeds)
    if weekend is not None and len(weekend) != len(seeds):
        raise ConfigError(f"weekend 标签数量 {len(weekend)} 与种子数量 {len(seeds)} 不一致")
    outputs = []
    for i, seed in enumerate(seeds):
        day_scenario = replace(scenario, seed=int(seed), day=scenario.day + timedelta(days=i))
        outputs.append(simulate_day(day_scenario, None if weekend is None else weekend[i]))
    return outputs
