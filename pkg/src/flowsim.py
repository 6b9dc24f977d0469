#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/06 09:40
@File    : flowsim.py

Deterministic flow-level WAN simulator.

Time jumps from event to event. Between two events every flow keeps a
constant rate and its remaining bytes fall linearly. The policy is consulted
whenever a flow finishes, a coflow arrives or the topology changes, and at
any time it asks for through ``next_decision``. Requests above a link
capacity are counted as violations and scaled down to fit. Rates a policy
gives to a FlowGroup are split over the group's unfinished flows (``fair``
or ``fifo``).
"""
import csv
import heapq
import itertools
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from base.base_policy import BasePolicy, RateAssignment
from config.terra_config import SimulatorConfig
from src.coflow_model import Coflow, GroupKey, finished_bytes
from src.wan_topology import Arc, WanEvent, WanGraph, apply_event, path_arcs
from utils.log import Logger
from utils.utils import Utils

logger = Logger('FlowSim')

FlowKey = Tuple[str, str]
CAPACITY_SLACK = 1e-9
VIOLATION_REL, VIOLATION_ABS = 1e-7, 1e-6
DEADLINE_SLACK = 1e-6
RELAXED_DEADLINE = 1.5

_ARRIVAL, _WAN, _APPLY = 0, 1, 2


@dataclass
class CoflowOutcome:
    coflow_id: str
    job_id: Optional[str]
    arrival: float
    total_bytes: int
    deadline: Optional[float] = None
    admitted: bool = False
    rejected: bool = False
    deadline_missed: bool = False
    finish: Optional[float] = None
    delivered: float = 0.0

    @property
    def cct(self) -> Optional[float]:
        return None if self.finish is None else self.finish - self.arrival


@dataclass
class Trace:
    records: List[Dict] = field(default_factory=list)
    outcomes: Dict[str, CoflowOutcome] = field(default_factory=dict)
    job_arrivals: Dict[str, float] = field(default_factory=dict)
    used_integral: float = 0.0
    capacity_integral: float = 0.0
    makespan: float = 0.0
    capacity_violations: int = 0
    lp_solves: int = 0
    rounds: int = 0

    def write(self, file_path: Union[str, Path]):
        Utils().write_jsonl(file_path, self.records)


@dataclass
class Metrics:
    policy: str = ""
    workload: str = ""
    seed: int = 0
    coflows: int = 0
    finished: int = 0
    avg_cct: float = 0.0
    p95_cct: float = 0.0
    avg_jct: float = 0.0
    p95_jct: float = 0.0
    utilization: float = 0.0
    deadline_met: float = 0.0
    deadline_met_relaxed: float = 0.0
    admitted_met: float = 0.0
    rejected_fraction: float = 0.0
    lp_solves: int = 0
    rounds: int = 0
    lp_per_round: float = 0.0
    makespan: float = 0.0
    capacity_violations: int = 0
    conservation_error: float = 0.0

    def to_row(self) -> Dict[str, Any]:
        return asdict(self)


def compute_metrics(trace: Trace, policy: str = "", workload: str = "", seed: int = 0) -> Metrics:
    outcomes = list(trace.outcomes.values())
    done = [o for o in outcomes if o.finish is not None]
    ccts = np.array([o.cct for o in done], dtype=float)

    jobs: Dict[str, List[CoflowOutcome]] = {}
    for o in outcomes:
        if o.job_id is not None and not o.rejected:
            jobs.setdefault(o.job_id, []).append(o)
    jcts = np.array([max(o.finish for o in members) - trace.job_arrivals.get(job, min(o.arrival for o in members))
                     for job, members in sorted(jobs.items()) if all(o.finish is not None for o in members)],
                    dtype=float)

    deadline = [o for o in outcomes if o.deadline is not None]
    admitted = [o for o in deadline if o.admitted]

    def met(o: CoflowOutcome, slack: float = 1.0) -> bool:
        return o.finish is not None and o.cct <= o.deadline * slack * (1 + DEADLINE_SLACK) + 1e-9

    errors = [abs(o.delivered - o.total_bytes) / o.total_bytes for o in done]
    return Metrics(
        policy=policy, workload=workload, seed=seed,
        coflows=len(outcomes), finished=len(done),
        avg_cct=float(ccts.mean()) if ccts.size else 0.0,
        p95_cct=float(np.percentile(ccts, 95)) if ccts.size else 0.0,
        avg_jct=float(jcts.mean()) if jcts.size else 0.0,
        p95_jct=float(np.percentile(jcts, 95)) if jcts.size else 0.0,
        utilization=trace.used_integral / trace.capacity_integral if trace.capacity_integral > 0 else 0.0,
        deadline_met=sum(met(o) for o in deadline) / len(deadline) if deadline else 0.0,
        deadline_met_relaxed=sum(met(o, RELAXED_DEADLINE) for o in deadline) / len(deadline) if deadline else 0.0,
        admitted_met=sum(met(o) for o in admitted) / len(admitted) if admitted else 0.0,
        rejected_fraction=sum(o.rejected for o in deadline) / len(deadline) if deadline else 0.0,
        lp_solves=trace.lp_solves, rounds=trace.rounds,
        lp_per_round=trace.lp_solves / trace.rounds if trace.rounds else 0.0,
        makespan=trace.makespan, capacity_violations=trace.capacity_violations,
        conservation_error=max(errors, default=0.0),
    )


def write_metrics_csv(file_path: Union[str, Path], metrics: List[Metrics]):
    columns = list(Metrics.__dataclass_fields__)
    with open(file_path, "w", encoding="utf-8", newline="") as file:
        writer = csv.DictWriter(file, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for m in metrics:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in m.to_row().items()})


def read_metrics_csv(file_path: Union[str, Path]) -> List[Metrics]:
    types = {name: f.type for name, f in Metrics.__dataclass_fields__.items()}
    rows = []
    with open(file_path, "r", encoding="utf-8", newline="") as file:
        for row in csv.DictReader(file):
            values = {}
            for k, v in row.items():
                kind = types.get(k)
                if kind in (float, "float"):
                    values[k] = float(v)
                elif kind in (int, "int"):
                    values[k] = int(v)
                elif k in types:
                    values[k] = v
            rows.append(Metrics(**values))
    return rows


@dataclass
class SimResult:
    metrics: Metrics
    trace: Trace


class FlowSimulator:
    """Runs one workload under one policy; single-threaded, no shared state."""

    def __init__(self, topology: WanGraph, policy: BasePolicy, cfg: Optional[SimulatorConfig] = None):
        self.topology = topology
        self.policy = policy
        self.cfg = cfg or SimulatorConfig()
        self.utils = Utils()

    def _push(self, time: float, kind: int, payload: Any):
        heapq.heappush(self.heap, (time, next(self.seq), kind, payload))

    def _flow_rates(self, assignment: RateAssignment) -> Dict[Arc, float]:
        """Enforce link capacity on ``assignment`` and split group rates over flows."""
        live_paths: List[Tuple[Any, Tuple[str, ...], float]] = []
        for key, paths in assignment.group_paths.items():
            c = self.active.get(key[0])
            group = c.groups.get((key[1], key[2])) if c is not None else None
            if group is not None and not group.finished:
                live_paths.extend((("g", key), p, r) for p, r in paths if r > 0)
        for key, paths in assignment.flow_paths.items():
            c = self.active.get(key[0])
            flow = c.flows.get(key[1]) if c is not None else None
            if flow is not None and not flow.finished:
                live_paths.extend((("f", key), p, r) for p, r in paths if r > 0)

        loads: Dict[Arc, float] = {}
        for _, path, rate in live_paths:
            for arc in path_arcs(path):
                loads[arc] = loads.get(arc, 0.0) + rate
        squeeze = {}
        for arc, load in loads.items():
            cap = self.graph.capacity(arc)
            if self.cfg.check_invariants and load > cap * (1 + VIOLATION_REL) + VIOLATION_ABS:
                self.trace.capacity_violations += 1
                logger.warning(f"t={self.clock:.6g}: {self.policy.name} puts {load:.6g} on {arc[0]}->{arc[1]} "
                               f"(capacity {cap:.6g}), clipped")
            if load > cap * (1 + CAPACITY_SLACK) + CAPACITY_SLACK:
                squeeze[arc] = cap / load if load > 0 else 0.0

        totals: Dict[Any, float] = {}
        used: Dict[Arc, float] = {}
        for owner, path, rate in live_paths:
            arcs = path_arcs(path)
            rate *= min([1.0] + [squeeze[a] for a in arcs if a in squeeze])
            totals[owner] = totals.get(owner, 0.0) + rate
            for arc in arcs:
                used[arc] = used.get(arc, 0.0) + rate

        self.rates = {}
        for (kind, key), rate in sorted(totals.items()):
            if kind == "f":
                self.rates[key] = self.rates.get(key, 0.0) + rate
                continue
            flows = self.active[key[0]].groups[(key[1], key[2])].active_flows()
            if self.cfg.intra_group == "fifo":
                shares = [(flows[0], rate)]
            else:
                shares = [(f, rate / len(flows)) for f in flows]
            for f, share in shares:
                fkey = (key[0], f.flow_id)
                self.rates[fkey] = self.rates.get(fkey, 0.0) + share

        return used

    def _digest(self) -> str:
        return self.utils.digest([(cid, fid, rate) for (cid, fid), rate in sorted(self.rates.items())])

    def _record(self, kind: str, coflow: Optional[str] = None, link: Optional[Arc] = None):
        record = {"t": self.clock, "kind": kind}
        if coflow is not None:
            record["coflow"] = coflow
        if link is not None:
            record["link"] = f"{link[0]}->{link[1]}"
        self.pending.append(record)

    def _release(self, coflow_id: str):
        for child in self.children.get(coflow_id, ()):
            self.waiting[child.coflow_id] -= 1
            if self.waiting[child.coflow_id] == 0:
                self._push(self.clock + self.compute_delay, _ARRIVAL, child)

    def _admit(self, batch: List[Coflow]):
        if not batch:
            return
        for c in batch:
            c.arrival = self.clock
            self.trace.outcomes[c.coflow_id] = CoflowOutcome(c.coflow_id, c.job_id, c.arrival, c.total_bytes,
                                                            c.deadline)
        decisions = self.policy.on_arrivals(list(batch), self.clock)
        for c in batch:
            outcome = self.trace.outcomes[c.coflow_id]
            outcome.admitted = c.admitted
            if decisions.get(c.coflow_id, True):
                self.active[c.coflow_id] = c
                self._record("arrival", coflow=c.coflow_id)
            else:
                outcome.rejected = True
                self._record("reject", coflow=c.coflow_id)
                self._release(c.coflow_id)
        batch.clear()
        self.dirty = True

    def run(self, workload, seed: int = 0, name: str = "") -> SimResult:
        """Simulate ``workload`` (a ``src.workload.Workload``) to completion."""
        self.graph = self.topology
        self.policy.reset(self.graph)
        self.heap: List = []
        self.seq = itertools.count()
        self.trace = Trace()
        self.active: Dict[str, Coflow] = {}
        self.rates: Dict[FlowKey, float] = {}
        self.pending: List[Dict] = []
        self.children: Dict[str, List[Coflow]] = {}
        self.waiting: Dict[str, int] = {}
        self.compute_delay = workload.compute_delay
        self.clock = 0.0
        self.dirty = False

        for job in workload.instantiate():
            self.trace.job_arrivals[job.job_id] = job.arrival
            for c in job.coflows:
                self.waiting[c.coflow_id] = len(c.deps)
                for dep in c.deps:
                    self.children.setdefault(dep, []).append(c)
                if not c.deps:
                    self._push(job.arrival, _ARRIVAL, c)
        for e in workload.wan_events:
            self._push(e.time, _WAN, e)

        assignment = RateAssignment()
        used: Dict[Arc, float] = {}
        done_groups = set()
        for step in range(self.cfg.max_steps):
            batch: List[Coflow] = []
            recompute = False
            while self.heap and self.heap[0][0] <= self.clock:
                _, _, kind, payload = heapq.heappop(self.heap)
                if kind == _ARRIVAL:
                    batch.append(payload)
                    continue
                self._admit(batch)
                if kind == _WAN:
                    self.graph = apply_event(self.graph, payload)
                    self.policy.on_wan_event(payload, self.graph, self.clock)
                    self._record(payload.kind.value, link=payload.link)
                    self.dirty = True
                else:
                    assignment = payload
                    recompute = True
            self._admit(batch)

            if self.dirty:
                self.dirty = False
                fresh = self.policy.allocate(self.clock)
                self.policy.log_round(self.clock, fresh)
                if self.cfg.decision_delay > 0:
                    self._push(self.clock + self.cfg.decision_delay, _APPLY, fresh)
                else:
                    assignment = fresh
                recompute = True
            if recompute:
                used = self._flow_rates(assignment)
            for record in self.pending:
                record["rates_snapshot_digest"] = self._digest()
                self.trace.records.append(record)
            self.pending = []

            if not self.active and not self.heap:
                break
            horizon = math.inf
            for (cid, fid), rate in self.rates.items():
                if rate > 0:
                    horizon = min(horizon, self.active[cid].flows[fid].remaining / rate)
            next_event = self.heap[0][0] if self.heap else math.inf
            wake = self.policy.next_decision(self.clock)
            t_next = min(self.clock + horizon, next_event, max(wake, self.clock))
            if math.isinf(t_next):
                logger.error(f"t={self.clock:.6g}: {len(self.active)} coflows can make no progress; stopping")
                break

            dt = t_next - self.clock
            for (cid, fid), rate in self.rates.items():
                if rate <= 0:
                    continue
                flow = self.active[cid].flows[fid]
                moved = min(rate * dt, flow.remaining)
                if self.clock + flow.remaining / rate <= t_next:
                    moved = flow.remaining
                flow.remaining -= moved
                if finished_bytes(flow.remaining, flow.volume):
                    moved += flow.remaining
                    flow.remaining = 0.0
                self.trace.outcomes[cid].delivered += moved
            self.trace.used_integral += sum(used.values()) * dt
            self.trace.capacity_integral += self.graph.total_capacity() * dt
            self.clock = t_next

            finished_groups: List[GroupKey] = []
            finished_coflows: List[str] = []
            resplit = False
            for cid in sorted(self.active):
                c = self.active[cid]
                for group in c.group_list():
                    if group.key in done_groups:
                        continue
                    if group.finished:
                        done_groups.add(group.key)
                        finished_groups.append(group.key)
                        self._record("flowgroup_finished", coflow=cid)
                    elif any(self.rates.get((cid, f.flow_id), 0) > 0 and f.finished for f in group.flows):
                        resplit = True
                if c.finished:
                    finished_coflows.append(cid)
            for cid in finished_coflows:
                c = self.active.pop(cid)
                c.finish_time = self.clock
                outcome = self.trace.outcomes[cid]
                outcome.finish = self.clock
                outcome.deadline_missed = c.deadline_missed
                self._record("coflow_finished", coflow=cid)
                self._release(cid)
            if finished_groups:
                self.policy.on_completions(finished_groups, finished_coflows, self.clock)
            if finished_groups or resplit or self.clock >= wake:
                self.dirty = True
        else:
            logger.error(f"stopped after {self.cfg.max_steps} steps at t={self.clock:.6g}")

        self.trace.makespan = self.clock
        self.trace.lp_solves = self.policy.lp_solves
        self.trace.rounds = self.policy.rounds
        metrics = compute_metrics(self.trace, self.policy.name, name or workload.name, seed)
        logger.info(f"{self.policy.name} on {metrics.workload}: avg CCT {metrics.avg_cct:.4g}s, "
                    f"avg JCT {metrics.avg_jct:.4g}s, utilization {metrics.utilization:.3f}")
        return SimResult(metrics, self.trace)


def run(workload, topology: WanGraph, policy: Union[str, BasePolicy], cfg: Optional[SimulatorConfig] = None,
        seed: int = 0, scheduler_cfg=None, record_trace: bool = False) -> SimResult:
    if isinstance(policy, str):
        from src.policies import make_policy
        extra = {"record_trace": True} if record_trace and policy == "terra" else {}
        policy = make_policy(policy, scheduler_cfg, **extra)
    return FlowSimulator(topology, policy, cfg).run(workload, seed)
