#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/05 11:30
@File    : policies.py

Rate-allocation policies the simulator can run.

perflow    single shortest path per flow, per-flow max-min fairness
multipath  every flow split equally over its k shortest paths, fair per subflow
varys      smallest-bottleneck-first coflow order with MADD rates, datacenters
           seen as aggregate ports, traffic pinned to the shortest path
swan_mcf   max-min MCF over all active FlowGroups, coflow-agnostic
terra      the coflow scheduler in ``src.scheduler``
"""
import math
from typing import Any, ClassVar, Dict, Hashable, List, Optional, Sequence, Tuple, Type

from base.base_policy import BasePolicy, RateAssignment
from src.coflow_model import Coflow, Pair, finished_bytes
from src.optimizer import CoflowOptimizer, build_arc_mask
from src.scheduler import CoflowFinished, FlowGroupFinished, TerraScheduler
from src.wan_topology import Arc, NodePath, WanGraph, k_shortest_paths, path_arcs
from utils.errors import ConfigError

FILL_TOL = 1e-9


def progressive_filling(units: Sequence[Tuple[Hashable, NodePath]], capacity: Dict[Arc, float]) -> Dict[Hashable, float]:
    """Max-min fair rates for units that each follow one fixed path."""
    rates = {key: 0.0 for key, _ in units}
    left = dict(capacity)
    arcs_of = {key: path_arcs(path) for key, path in units}
    active = [key for key, _ in units if arcs_of[key] and all(left.get(a, 0.0) > 0 for a in arcs_of[key])]
    while active:
        count: Dict[Arc, int] = {}
        for key in active:
            for arc in arcs_of[key]:
                count[arc] = count.get(arc, 0) + 1
        step = min(left[arc] / n for arc, n in count.items())
        for key in active:
            rates[key] += step
        saturated = set()
        for arc, n in count.items():
            left[arc] -= step * n
            if left[arc] <= FILL_TOL * max(capacity.get(arc, 0.0), 1.0):
                left[arc] = 0.0
                saturated.add(arc)
        active = [key for key in active if not saturated.intersection(arcs_of[key])]
    return rates


class _PathPolicy(BasePolicy):
    """Policies that route on precomputed shortest paths."""
    path_cache: Dict[Any, List[NodePath]] = {}

    def reset(self, graph: WanGraph):
        super().reset(graph)
        self.path_cache = {}

    def on_wan_event(self, event, graph: WanGraph, now: float):
        super().on_wan_event(event, graph, now)
        self.path_cache = {}

    def paths(self, pair: Pair, k: int) -> List[NodePath]:
        key = (pair, k)
        if key not in self.path_cache:
            self.path_cache[key] = k_shortest_paths(self.graph, pair[0], pair[1], k)
        return self.path_cache[key]

    def active_flows(self) -> List[Tuple[Coflow, Any]]:
        return [(c, f) for cid, c in sorted(self.coflows.items())
                for fid, f in sorted(c.flows.items()) if not f.finished]


class PerFlowPolicy(_PathPolicy):
    policy_name: ClassVar[str] = "perflow"

    def allocate(self, now: float) -> RateAssignment:
        units = []
        for c, f in self.active_flows():
            for i, path in enumerate(self.paths(f.pair, 1)):
                units.append(((c.coflow_id, f.flow_id, i), path))
        rates = progressive_filling(units, self.graph.capacities())
        assignment = RateAssignment()
        for (cid, fid, i), path in units:
            if rates[(cid, fid, i)] > 0:
                assignment.flow_paths.setdefault((cid, fid), []).append((path, rates[(cid, fid, i)]))
        self.rounds += 1
        return assignment


class MultipathPolicy(_PathPolicy):
    """Each flow is cut into equal subflows, one per candidate path.

    A subflow owns ``remaining / paths`` bytes and shares its links fairly
    with every other subflow; the flow ends when its last subflow does. The
    policy integrates the rates it handed out to know when a subflow drains
    and asks to be consulted again at that moment.
    """
    policy_name: ClassVar[str] = "multipath"
    subflows: Dict[Tuple[str, str, int], List] = {}
    last_rates: Dict[Tuple[str, str, int], float] = {}
    stamp: float = 0.0

    def reset(self, graph: WanGraph):
        super().reset(graph)
        self.subflows = {}
        self.last_rates = {}
        self.stamp = 0.0

    def on_wan_event(self, event, graph: WanGraph, now: float):
        self._advance(now)
        super().on_wan_event(event, graph, now)
        # the candidate paths may have changed, so what is left is split again
        self.subflows = {}
        self.last_rates = {}

    def _advance(self, now: float):
        dt = now - self.stamp
        for key, rate in self.last_rates.items():
            if key in self.subflows:
                entry = self.subflows[key]
                entry[1] = max(entry[1] - rate * dt, 0.0)
        self.stamp = now

    def _split(self, c: Coflow, f) -> List[Tuple[str, str, int]]:
        keys = [k for k in self.subflows if k[:2] == (c.coflow_id, f.flow_id)]
        if not keys:
            paths = self.paths(f.pair, self.config.k)
            if not paths:
                return []
            for i, path in enumerate(paths):
                self.subflows[(c.coflow_id, f.flow_id, i)] = [path, f.remaining / len(paths), f.remaining / len(paths)]
            return [(c.coflow_id, f.flow_id, i) for i in range(len(paths))]
        # keep the subflows consistent with the bytes the simulator moved
        tracked = sum(self.subflows[k][1] for k in keys)
        if tracked > 0:
            for k in keys:
                self.subflows[k][1] *= f.remaining / tracked
        return keys

    def allocate(self, now: float) -> RateAssignment:
        self._advance(now)
        live = set()
        units = []
        for c, f in self.active_flows():
            for key in self._split(c, f):
                live.add(key)
                path, left, share = self.subflows[key]
                if not finished_bytes(left, share):
                    units.append((key, path))
        self.subflows = {k: v for k, v in self.subflows.items() if k in live}
        rates = progressive_filling(units, self.graph.capacities())
        assignment = RateAssignment()
        for key, path in units:
            if rates[key] > 0:
                assignment.flow_paths.setdefault(key[:2], []).append((path, rates[key]))
        self.last_rates = {k: r for k, r in rates.items() if r > 0}
        self.rounds += 1
        return assignment

    def next_decision(self, now: float) -> float:
        return min((self.stamp + self.subflows[k][1] / r for k, r in self.last_rates.items() if k in self.subflows),
                   default=math.inf)


class VarysPolicy(_PathPolicy):
    policy_name: ClassVar[str] = "varys"

    def _ports(self) -> Tuple[Dict[str, float], Dict[str, float]]:
        egress: Dict[str, float] = {n: 0.0 for n in self.graph.nodes}
        ingress: Dict[str, float] = {n: 0.0 for n in self.graph.nodes}
        for (u, v), cap in self.graph.capacities().items():
            egress[u] += cap
            ingress[v] += cap
        return egress, ingress

    @staticmethod
    def _bottleneck(flows: List[Any], egress: Dict[str, float], ingress: Dict[str, float]) -> float:
        out: Dict[str, float] = {}
        inc: Dict[str, float] = {}
        for f in flows:
            out[f.src] = out.get(f.src, 0.0) + f.remaining
            inc[f.dst] = inc.get(f.dst, 0.0) + f.remaining
        gamma = 0.0
        for table, port in ((out, egress), (inc, ingress)):
            for node, volume in table.items():
                gamma = max(gamma, volume / port[node] if port[node] > 0 else math.inf)
        return gamma

    def allocate(self, now: float) -> RateAssignment:
        egress, ingress = self._ports()
        by_coflow: Dict[str, List[Any]] = {}
        for c, f in self.active_flows():
            by_coflow.setdefault(c.coflow_id, []).append(f)
        order = sorted(by_coflow, key=lambda cid: (self._bottleneck(by_coflow[cid], egress, ingress),
                                                   self.coflows[cid].arrival, cid))
        left = self.graph.capacities()
        rates: Dict[Tuple[str, str], float] = {}
        routes: Dict[Tuple[str, str], NodePath] = {}
        for cid in order:
            flows = by_coflow[cid]
            gamma = self._bottleneck(flows, egress, ingress)
            for f in flows:
                paths = self.paths(f.pair, 1)
                if not paths:
                    continue
                key = (cid, f.flow_id)
                routes[key] = paths[0]
                if not math.isfinite(gamma) or gamma <= 0:
                    continue
                rate = min([f.remaining / gamma] + [left[a] for a in path_arcs(paths[0])])
                rate = max(rate, 0.0)
                rates[key] = rate
                for a in path_arcs(paths[0]):
                    left[a] = max(left[a] - rate, 0.0)
                egress[f.src] = max(egress[f.src] - rate, 0.0)
                ingress[f.dst] = max(ingress[f.dst] - rate, 0.0)
        extra = progressive_filling(sorted(routes.items()), left)
        assignment = RateAssignment()
        for key, path in sorted(routes.items()):
            total = rates.get(key, 0.0) + extra.get(key, 0.0)
            if total > 0:
                assignment.flow_paths[key] = [(path, total)]
        self.rounds += 1
        return assignment


class SwanMcfPolicy(BasePolicy):
    policy_name: ClassVar[str] = "swan_mcf"
    optimizer: Optional[CoflowOptimizer] = None

    def reset(self, graph: WanGraph):
        super().reset(graph)
        self.optimizer = CoflowOptimizer(self.config.tau)

    def allocate(self, now: float) -> RateAssignment:
        groups = [g for _, c in sorted(self.coflows.items()) for g in c.remaining_groups()]
        assignment = RateAssignment()
        if groups:
            mask = build_arc_mask(groups, self.graph, self.config.k)
            for key, ga in self.optimizer.max_min_mcf(groups, self.graph, mask).items():
                if ga.paths:
                    assignment.group_paths[key] = list(ga.paths)
        self.lp_solves = self.optimizer.lp_solves
        self.rounds += 1
        return assignment


class TerraPolicy(_PathPolicy):
    policy_name: ClassVar[str] = "terra"
    scheduler: Optional[TerraScheduler] = None
    bypass: Dict[str, Coflow] = {}
    record_trace: bool = False

    def reset(self, graph: WanGraph):
        super().reset(graph)
        self.scheduler = TerraScheduler(graph, self.config, record_trace=self.record_trace)
        self.bypass = {}

    def on_arrivals(self, coflows: List[Coflow], now: float) -> Dict[str, bool]:
        decisions = {}
        central = []
        for c in coflows:
            if c.bypasses(self.config.bypass_bytes) and not c.has_deadline:
                self.bypass[c.coflow_id] = c
                decisions[c.coflow_id] = True
            else:
                central.append(c)
        if central:
            decisions.update(self.scheduler.on_arrivals(central, now))
        return decisions

    def on_completions(self, groups, coflows, now: float):
        done = set(coflows)
        for cid in coflows:
            if self.bypass.pop(cid, None) is None:
                self.scheduler.on_event(CoflowFinished(cid, now))
        for key in groups:
            if key[0] not in done and key[0] not in self.bypass:
                self.scheduler.on_event(FlowGroupFinished(key, now))

    def on_wan_event(self, event, graph: WanGraph, now: float):
        super().on_wan_event(event, graph, now)
        self.scheduler.on_event(event)

    def allocate(self, now: float) -> RateAssignment:
        schedule = self.scheduler.schedule
        assignment = RateAssignment(group_paths={k: list(v) for k, v in schedule.group_paths().items()})
        if self.bypass:
            left = self.graph.capacities()
            for arc, rate in schedule.arc_totals().items():
                left[arc] = max(self.graph.capacity(arc) - rate, 0.0)
            units = [((cid, fid), self.paths(f.pair, 1)[0]) for cid, c in sorted(self.bypass.items())
                     for fid, f in sorted(c.flows.items()) if not f.finished and self.paths(f.pair, 1)]
            routes = dict(units)
            for key, rate in progressive_filling(units, left).items():
                if rate > 0:
                    assignment.flow_paths[key] = [(routes[key], rate)]
        self.lp_solves = self.scheduler.optimizer.lp_solves
        self.rounds = self.scheduler.rounds
        return assignment


POLICIES: Dict[str, Type[BasePolicy]] = {
    cls.policy_name: cls for cls in (TerraPolicy, PerFlowPolicy, MultipathPolicy, VarysPolicy, SwanMcfPolicy)
}


def make_policy(name: str, config=None, **kwargs) -> BasePolicy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ConfigError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None
    if config is not None:
        kwargs["config"] = config
    return cls(**kwargs)
