#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/07 15:05
@File    : scenarios.py

Small hand-checkable instances used as regressions.

figure1 (contention)  two coflows on a 3-node mesh, contention on A->B
figure2 (failover)    two coflows, the A<->C link fails right after they arrive
flowgroup             one coflow, 10 x 1 GB from B and 6 x 1 GB from C towards A
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List

from config.terra_config import SchedulerConfig
from src.wan_topology import WanGraph, load_topology
from src.workload import Workload, load
from utils.errors import ConfigError

GB = 10 ** 9


@dataclass
class Scenario:
    name: str
    topology: WanGraph
    workload: Workload
    scheduler: SchedulerConfig
    expected_avg_cct: Dict[str, float] = field(default_factory=dict)


def _flow(flow_id: str, src: str, dst: str, gigabytes: float) -> Dict:
    return {"id": flow_id, "src": src, "dst": dst, "bytes": int(gigabytes * GB)}


def contention() -> Scenario:
    doc = {
        "name": "contention",
        "coflows": [
            {"id": "C1", "arrival_s": 0.0, "flows": [_flow("f11", "A", "B", 5)]},
            {"id": "C2", "arrival_s": 0.0, "flows": [_flow("f21", "A", "B", 5), _flow("f22", "C", "B", 25)]},
        ],
    }
    return Scenario("contention", load_topology("contention"), load(doc), SchedulerConfig(alpha=0.0),
                    {"perflow": 14.0, "varys": 12.0, "multipath": 10.0, "terra": 8.0})


def failover(fail: bool = True) -> Scenario:
    doc = {
        "name": "failover" if fail else "failover-nofail",
        "coflows": [
            {"id": "C3", "arrival_s": 0.0, "flows": [_flow("f31", "A", "B", 10)]},
            {"id": "C4", "arrival_s": 0.0, "flows": [_flow("f41", "C", "B", 10), _flow("f42", "A", "C", 15)]},
        ],
        "wan_events": [
            {"t": 0.0, "kind": "link_fail", "src": "A", "dst": "C"},
            {"t": 0.0, "kind": "link_fail", "src": "C", "dst": "A"},
        ] if fail else [],
    }
    expected = {"perflow": 18.0, "terra": 14.0} if fail else {"perflow": 8.0}
    return Scenario(doc["name"], load_topology("failover"), load(doc), SchedulerConfig(alpha=0.0), expected)


def flowgroup() -> Scenario:
    flows = [_flow(f"b{i}", "B", "A", 1) for i in range(10)] + [_flow(f"c{i}", "C", "A", 1) for i in range(6)]
    doc = {"name": "flowgroup", "coflows": [{"id": "C1", "arrival_s": 0.0, "flows": flows}]}
    return Scenario("flowgroup", load_topology("flowgroup"), load(doc), SchedulerConfig(alpha=0.0),
                    {"terra": 8.0})


SCENARIOS: Dict[str, Callable[[], Scenario]] = {
    "figure1": contention,
    "figure2": failover,
    "flowgroup": flowgroup,
}
ALIASES: Dict[str, str] = {"contention": "figure1", "failover": "figure2"}


def scenario_names() -> List[str]:
    return sorted(SCENARIOS) + sorted(ALIASES)


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[ALIASES.get(name, name)]()
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; choose from {scenario_names()}") from None
