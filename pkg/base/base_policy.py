#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/05 09:12
@File    : base_policy.py
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, model_validator

from config.terra_config import SchedulerConfig
from utils.log import LEVELS, Logger

Arc = Tuple[str, str]
NodePath = Tuple[str, ...]
PathRates = List[Tuple[NodePath, float]]


@dataclass
class RateAssignment:
    """Rates a policy hands to the simulator.

    ``group_paths`` is keyed by (coflow id, src, dst) and is split over the
    group's flows by the simulator; ``flow_paths`` is keyed by
    (coflow id, flow id) and applies to one flow.
    """
    group_paths: Dict[Tuple[str, str, str], PathRates] = field(default_factory=dict)
    flow_paths: Dict[Tuple[str, str], PathRates] = field(default_factory=dict)

    def arc_loads(self) -> Dict[Arc, float]:
        loads: Dict[Arc, float] = {}
        for table in (self.group_paths, self.flow_paths):
            for paths in table.values():
                for path, rate in paths:
                    for i in range(len(path) - 1):
                        arc = (path[i], path[i + 1])
                        loads[arc] = loads.get(arc, 0.0) + rate
        return loads


class BasePolicy(ABC, BaseModel):
    """一个速率分配策略"""
    name: Optional[str] = None
    logger: Optional[Logger] = None
    config: SchedulerConfig = SchedulerConfig()
    graph: Any = None
    coflows: Dict[str, Any] = {}
    lp_solves: int = 0
    rounds: int = 0

    class Config:
        arbitrary_types_allowed = True

    @model_validator(mode="before")
    @classmethod
    def set_name_if_empty(cls, values):
        if "name" not in values or not values["name"]:
            values["name"] = getattr(cls, "policy_name", cls.__name__)
        return values

    @model_validator(mode="before")
    @classmethod
    def set_logger_if_empty(cls, values):
        if "logger" not in values or not values["logger"]:
            values["logger"] = Logger(cls.__name__)
        return values

    def reset(self, graph: Any):
        """Called once before a run with the initial topology."""
        self.graph = graph
        self.coflows = {}
        self.lp_solves = 0
        self.rounds = 0

    def on_arrivals(self, coflows: List[Any], now: float) -> Dict[str, bool]:
        """Returns the admission decision per coflow id."""
        for c in coflows:
            self.coflows[c.coflow_id] = c
        return {c.coflow_id: True for c in coflows}

    def on_completions(self, groups: List[Tuple[str, str, str]], coflows: List[str], now: float):
        for coflow_id in coflows:
            self.coflows.pop(coflow_id, None)

    def on_wan_event(self, event: Any, graph: Any, now: float):
        self.graph = graph

    def log_round(self, now: float, assignment: RateAssignment):
        if not self.logger.enabled(LEVELS["ROUND"]):
            return
        loads = assignment.arc_loads()
        busiest = max(loads.items(), key=lambda item: (item[1], item[0]), default=None)
        summary = f", busiest {busiest[0][0]}->{busiest[0][1]} at {busiest[1]:.4g} B/s" if busiest else ""
        self.logger.round(f"t={now:.6g} round {self.rounds}: {len(assignment.group_paths)} groups, "
                          f"{len(assignment.flow_paths)} flows on {len(loads)} arcs{summary}")

    def next_decision(self, now: float) -> float:
        """Earliest time ``allocate`` should run again with no event in between."""
        return math.inf

    @abstractmethod
    def allocate(self, now: float) -> RateAssignment:
        """Implement the rate computation in child class.
        """
