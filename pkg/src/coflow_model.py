#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/02 16:40
@File    : coflow_model.py

Coflows, their flows and the FlowGroups the flows coalesce into.

A FlowGroup holds every flow of one coflow sharing a (src, dst) datacenter
pair. Its volume and remaining bytes are derived from the member flows, so the
simulator only ever decrements flows.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from utils.errors import CoflowError
from utils.utils import StrEnum

GroupKey = Tuple[str, str, str]
Pair = Tuple[str, str]

FINISH_RELATIVE_TOL = 1e-9
FINISH_ABSOLUTE_TOL = 1e-6


def finished_bytes(remaining: float, volume: float) -> bool:
    return remaining <= FINISH_RELATIVE_TOL * volume + FINISH_ABSOLUTE_TOL


@dataclass
class Flow:
    flow_id: str
    src: str
    dst: str
    volume: int
    remaining: float = -1.0

    def __post_init__(self):
        if self.src == self.dst:
            raise CoflowError(f"flow {self.flow_id}: intra-datacenter flow {self.src}->{self.dst}")
        if int(self.volume) != self.volume or self.volume <= 0:
            raise CoflowError(f"flow {self.flow_id}: volume must be a positive integer, got {self.volume}")
        self.volume = int(self.volume)
        if self.remaining < 0:
            self.remaining = float(self.volume)
        if self.remaining > self.volume:
            raise CoflowError(f"flow {self.flow_id}: remaining {self.remaining} exceeds volume {self.volume}")

    @property
    def pair(self) -> Pair:
        return self.src, self.dst

    @property
    def finished(self) -> bool:
        return finished_bytes(self.remaining, self.volume)

    @classmethod
    def from_document(cls, doc: Mapping) -> "Flow":
        try:
            return cls(str(doc["id"]), str(doc["src"]), str(doc["dst"]), doc["bytes"])
        except (KeyError, TypeError) as e:
            raise CoflowError(f"malformed flow {doc}: {e}") from e

    def to_document(self) -> Dict:
        return {"id": self.flow_id, "src": self.src, "dst": self.dst, "bytes": self.volume}


@dataclass
class FlowGroup:
    coflow_id: str
    src: str
    dst: str
    flows: List[Flow] = field(default_factory=list)

    @classmethod
    def of(cls, coflow_id: str, src: str, dst: str, volume: int) -> "FlowGroup":
        """A group backed by a single synthetic flow."""
        return cls(coflow_id, src, dst, [Flow(f"{src}->{dst}", src, dst, volume)])

    @property
    def key(self) -> GroupKey:
        return self.coflow_id, self.src, self.dst

    @property
    def pair(self) -> Pair:
        return self.src, self.dst

    @property
    def volume(self) -> int:
        return sum(f.volume for f in self.flows)

    @property
    def remaining(self) -> float:
        return sum(f.remaining for f in self.flows)

    @property
    def finished(self) -> bool:
        return all(f.finished for f in self.flows)

    def active_flows(self) -> List[Flow]:
        return [f for f in self.flows if not f.finished]


def group_flows(flows: Iterable[Flow], coflow_id: str = "") -> List[FlowGroup]:
    """Coalesce flows by (src, dst); output sorted by pair, member flows by id."""
    groups: Dict[Pair, FlowGroup] = {}
    for flow in sorted(flows, key=lambda f: f.flow_id):
        if flow.src == flow.dst:
            raise CoflowError(f"flow {flow.flow_id}: intra-datacenter flow")
        groups.setdefault(flow.pair, FlowGroup(coflow_id, flow.src, flow.dst)).flows.append(flow)
    if not groups:
        raise CoflowError("a coflow needs at least one flow")
    return [groups[pair] for pair in sorted(groups)]


class CoflowState(StrEnum):
    PENDING = "pending"
    ACTIVE = "active"
    PREEMPTED = "preempted"
    FINISHED = "finished"
    REJECTED = "rejected"


@dataclass
class Coflow:
    coflow_id: str
    arrival: float
    flows: Dict[str, Flow]
    deadline: Optional[float] = None
    deps: Tuple[str, ...] = ()
    job_id: Optional[str] = None
    admitted: bool = False
    state: CoflowState = CoflowState.PENDING
    finish_time: Optional[float] = None
    deadline_missed: bool = False
    groups: Dict[Pair, FlowGroup] = field(default_factory=dict)

    def __post_init__(self):
        if self.deadline is not None and self.deadline <= 0:
            raise CoflowError(f"coflow {self.coflow_id}: deadline must be positive")
        if not self.groups:
            self.groups = {g.pair: g for g in group_flows(self.flows.values(), self.coflow_id)}

    @classmethod
    def create(cls, coflow_id: str, flows: Iterable[Flow], arrival: float = 0.0,
               deadline: Optional[float] = None, **kwargs) -> "Coflow":
        table: Dict[str, Flow] = {}
        for flow in flows:
            if flow.flow_id in table:
                raise CoflowError(f"coflow {coflow_id}: duplicate flow id {flow.flow_id}")
            table[flow.flow_id] = flow
        return cls(coflow_id, arrival, table, deadline, **kwargs)

    @classmethod
    def from_document(cls, doc: Mapping, arrival: Optional[float] = None, job_id: Optional[str] = None) -> "Coflow":
        try:
            flows = [Flow.from_document(f) for f in doc["flows"]]
            deadline = doc.get("deadline_s")
            return cls.create(str(doc["id"]), flows,
                              arrival=float(doc.get("arrival_s", 0.0) if arrival is None else arrival),
                              deadline=None if deadline is None else float(deadline),
                              deps=tuple(str(d) for d in doc.get("deps", ())), job_id=job_id)
        except (KeyError, TypeError) as e:
            raise CoflowError(f"malformed coflow {doc}: {e}") from e

    def to_document(self, with_arrival: bool = False) -> Dict:
        doc: Dict = {"id": self.coflow_id, "deps": list(self.deps),
                     "flows": [f.to_document() for f in self.flows.values()]}
        if with_arrival:
            doc["arrival_s"] = self.arrival
        if self.deadline is not None:
            doc["deadline_s"] = self.deadline
        return doc

    @property
    def has_deadline(self) -> bool:
        return self.deadline is not None

    @property
    def total_bytes(self) -> int:
        return sum(f.volume for f in self.flows.values())

    @property
    def remaining_bytes(self) -> float:
        return sum(f.remaining for f in self.flows.values())

    @property
    def finished(self) -> bool:
        return all(g.finished for g in self.groups.values())

    @property
    def absolute_deadline(self) -> Optional[float]:
        return None if self.deadline is None else self.arrival + self.deadline

    def group_list(self) -> List[FlowGroup]:
        return [self.groups[pair] for pair in sorted(self.groups)]

    def remaining_groups(self) -> List[FlowGroup]:
        return [g for g in self.group_list() if not g.finished]

    def bypasses(self, threshold: int) -> bool:
        return threshold > 0 and self.total_bytes < threshold


def update_coflow(c: Coflow, new_flows: Iterable[Flow]) -> Coflow:
    """Merge ``new_flows`` into ``c``; only additive updates are supported."""
    if c.state in (CoflowState.FINISHED, CoflowState.REJECTED):
        raise CoflowError(f"coflow {c.coflow_id} is {c.state} and cannot be updated")
    new_flows = list(new_flows)
    ids = [f.flow_id for f in new_flows]
    if len(set(ids)) != len(ids) or any(i in c.flows for i in ids):
        raise CoflowError(f"coflow {c.coflow_id}: duplicate flow id in update")
    for flow in sorted(new_flows, key=lambda f: f.flow_id):
        c.flows[flow.flow_id] = flow
        group = c.groups.get(flow.pair)
        if group is None:
            group = c.groups[flow.pair] = FlowGroup(c.coflow_id, flow.src, flow.dst)
        group.flows.append(flow)
    return c
