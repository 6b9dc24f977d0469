#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/04 10:05
@File    : scheduler.py

Offline and online coflow schedulers.

``alloc_bandwidth`` is one scheduling round: coflows are served in priority
order by ``min_cct`` on the (1 - alpha) share of the WAN, coflows that cannot
be served in entirety are parked, and the leftover (alpha reserve included) is
water-filled first over the parked coflows and then over the rest.

``TerraScheduler`` is the event-driven state machine around it: deadline
admission, pinned reservations, restricted re-optimization when a FlowGroup
finishes, and re-optimization on significant WAN changes.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from config.terra_config import SchedulerConfig
from src.coflow_model import Coflow, CoflowState, Flow, GroupKey, Pair, update_coflow
from src.optimizer import (Allocation, ArcMask, CoflowOptimizer, GroupAllocation, PathRates, build_arc_mask,
                           sum_arc_rates)
from src.wan_topology import Arc, WanEvent, WanEventKind, WanGraph, apply_event, significant_change
from utils.errors import SchedulerError
from utils.log import Logger

logger = Logger('Scheduler')


@dataclass(frozen=True)
class FlowGroupFinished:
    key: GroupKey
    time: float = 0.0


@dataclass(frozen=True)
class CoflowFinished:
    coflow_id: str
    time: float = 0.0


SchedulerEvent = Union[FlowGroupFinished, CoflowFinished, WanEvent]


@dataclass
class Schedule:
    time: float = 0.0
    trigger: str = "offline"
    order: List[str] = field(default_factory=list)
    allocations: Dict[str, Allocation] = field(default_factory=dict)
    failed: List[str] = field(default_factory=list)
    conservation: Dict[GroupKey, GroupAllocation] = field(default_factory=dict)
    rejected: List[str] = field(default_factory=list)
    lp_solves: int = 0

    def group_paths(self) -> Dict[GroupKey, PathRates]:
        """Per-group (path, rate) lists, min-CCT and work-conservation rates merged."""
        merged: Dict[GroupKey, Dict] = {}
        for alloc in self.allocations.values():
            for key, ga in alloc.groups.items():
                table = merged.setdefault(key, {})
                for path, rate in ga.paths:
                    table[path] = table.get(path, 0.0) + rate
        for key, ga in self.conservation.items():
            table = merged.setdefault(key, {})
            for path, rate in ga.paths:
                table[path] = table.get(path, 0.0) + rate
        return {key: sorted(table.items()) for key, table in sorted(merged.items())}

    def arc_totals(self) -> Dict[Arc, float]:
        return sum_arc_rates([ga for a in self.allocations.values() for ga in a.groups.values()] +
                             list(self.conservation.values()))

    def coflow_rate(self, coflow_id: str) -> float:
        rate = self.allocations[coflow_id].rate if coflow_id in self.allocations else 0.0
        return rate + sum(ga.rate for key, ga in self.conservation.items() if key[0] == coflow_id)

    def group_arcs(self, key: GroupKey) -> Set[Arc]:
        arcs = set()
        alloc = self.allocations.get(key[0])
        if alloc is not None and key in alloc.groups:
            arcs.update(a for a, r in alloc.groups[key].arc_rates.items() if r > 0)
        if key in self.conservation:
            arcs.update(a for a, r in self.conservation[key].arc_rates.items() if r > 0)
        return arcs

    def to_record(self) -> Dict:
        coflows = {cid: alloc.to_record() for cid, alloc in sorted(self.allocations.items())}
        for key, ga in sorted(self.conservation.items()):
            entry = coflows.setdefault(key[0], {"gamma": None, "paths": []})
            entry["paths"].extend({"group": f"{key[1]}->{key[2]}", "hops": list(p), "bytes_per_s": r, "mcf": True}
                                  for p, r in ga.paths)
        return {"time": self.time, "trigger": self.trigger, "coflows": coflows, "failed": list(self.failed),
                "rejected": list(self.rejected), "lp_solves": self.lp_solves}


class _MaskCache:
    """Arc masks per datacenter pair for the current topology."""

    def __init__(self, k: int):
        self.k = k
        self.graph: Optional[WanGraph] = None
        self.mask = ArcMask()

    def reset(self, graph: WanGraph):
        self.graph = graph
        self.mask = ArcMask()

    def for_pairs(self, pairs: Iterable[Pair]) -> ArcMask:
        missing = [p for p in pairs if p not in self.mask.allowed]
        if missing:
            self.mask.allowed.update(build_arc_mask(missing, self.graph, self.k).allowed)
        return self.mask


def _masks_for(graph: WanGraph, cfg: SchedulerConfig, masks: Optional[_MaskCache]) -> _MaskCache:
    if masks is None:
        masks = _MaskCache(cfg.k)
        masks.reset(graph)
    return masks


def alloc_bandwidth(coflows: Sequence[Coflow], g: WanGraph, cfg: SchedulerConfig,
                    optimizer: Optional[CoflowOptimizer] = None, now: float = 0.0,
                    fixed: Optional[Dict[str, Allocation]] = None, failed: Sequence[Coflow] = (),
                    masks: Optional[_MaskCache] = None, conserve: Sequence[Coflow] = ()) -> Schedule:
    """One scheduling round over ``coflows`` in the given priority order.

    ``fixed`` allocations (admitted reservations, or allocations kept by a
    restricted re-optimization) are carved out first and carried unchanged.
    ``failed`` coflows join the parked set and ``conserve`` lists extra
    coflows whose groups take part in work conservation.
    """
    optimizer = optimizer or CoflowOptimizer(cfg.tau)
    masks = _masks_for(g, cfg, masks)
    solves_before = optimizer.lp_solves
    fixed = dict(fixed or {})
    schedule = Schedule(time=now, order=[c.coflow_id for c in coflows])
    schedule.allocations.update(fixed)

    residual = g.scaled(1.0 - cfg.alpha).subtract(sum_arc_rates(
        ga for alloc in fixed.values() for ga in alloc.groups.values()), clamp=True)
    parked: List[Coflow] = list(failed)
    scheduled: List[Coflow] = []
    for c in coflows:
        if c.coflow_id in fixed:
            scheduled.append(c)
            continue
        groups = c.remaining_groups()
        if not groups:
            continue
        alloc = optimizer.min_cct(groups, residual, masks.for_pairs(grp.pair for grp in groups))
        if alloc is None:
            parked.append(c)
            continue
        if c.has_deadline:
            left = c.absolute_deadline - now
            if left > 0 and alloc.gamma < left:
                alloc = alloc.scaled(alloc.gamma / left)
        residual = residual.subtract(alloc.arc_totals(), clamp=True)
        schedule.allocations[c.coflow_id] = alloc
        scheduled.append(c)

    leftover = g.subtract(schedule_arc_totals(schedule.allocations.values()), clamp=True)
    parked_groups = [grp for c in parked for grp in c.remaining_groups()]
    if parked_groups:
        rates = optimizer.max_min_mcf(parked_groups, leftover, masks.for_pairs(grp.pair for grp in parked_groups))
        schedule.conservation.update({k: ga for k, ga in rates.items() if ga.paths})
        leftover = leftover.subtract(sum_arc_rates(rates.values()), clamp=True)
    rest = [grp for c in list(scheduled) + list(conserve) if not c.has_deadline for grp in c.remaining_groups()]
    if rest:
        rates = optimizer.max_min_mcf(rest, leftover, masks.for_pairs(grp.pair for grp in rest))
        schedule.conservation.update({k: ga for k, ga in rates.items() if ga.paths})

    schedule.failed = [c.coflow_id for c in parked]
    schedule.lp_solves = optimizer.lp_solves - solves_before
    return schedule


def schedule_arc_totals(allocations: Iterable[Allocation]) -> Dict[Arc, float]:
    return sum_arc_rates(ga for alloc in allocations for ga in alloc.groups.values())


def standalone_gamma(c: Coflow, g: WanGraph, cfg: SchedulerConfig, optimizer: CoflowOptimizer,
                     masks: Optional[_MaskCache] = None) -> float:
    """Gamma of the remaining groups on the (1 - alpha) share of an otherwise empty WAN."""
    groups = c.remaining_groups()
    if not groups:
        return 0.0
    masks = _masks_for(g, cfg, masks)
    alloc = optimizer.min_cct(groups, g.scaled(1.0 - cfg.alpha), masks.for_pairs(grp.pair for grp in groups))
    return math.inf if alloc is None else alloc.gamma


def minimize_cct_offline(coflows: Iterable[Coflow], g: WanGraph, cfg: SchedulerConfig,
                         optimizer: Optional[CoflowOptimizer] = None) -> Schedule:
    """Shortest standalone Gamma first, ties by arrival then id."""
    optimizer = optimizer or CoflowOptimizer(cfg.tau)
    masks = _masks_for(g, cfg, None)
    solves_before = optimizer.lp_solves
    keyed = [(standalone_gamma(c, g, cfg, optimizer, masks), c.arrival, c.coflow_id, c) for c in coflows]
    order = [item[-1] for item in sorted(keyed, key=lambda item: item[:3])]
    schedule = alloc_bandwidth(order, g, cfg, optimizer, masks=masks)
    schedule.lp_solves = optimizer.lp_solves - solves_before
    return schedule


class TerraScheduler:
    """Online scheduler; events are handled one at a time in time order."""

    def __init__(self, graph: WanGraph, cfg: Optional[SchedulerConfig] = None,
                 optimizer: Optional[CoflowOptimizer] = None, record_trace: bool = False):
        self.graph = graph
        self.cfg = cfg or SchedulerConfig()
        self.optimizer = optimizer or CoflowOptimizer(self.cfg.tau)
        self.masks = _MaskCache(self.cfg.k)
        self.masks.reset(graph)
        self.coflows: Dict[str, Coflow] = {}
        self.pinned: Dict[str, Allocation] = {}
        self.rejected: List[str] = []
        self.finished: List[Tuple[str, float]] = []
        self.schedule = Schedule(trigger="init")
        self.rounds = 0
        self.trace: Optional[List[Dict]] = [] if record_trace else None
        self.now = 0.0

    # ---- views -------------------------------------------------------------

    def active(self) -> List[Coflow]:
        return [c for c in self.coflows.values() if c.state in (CoflowState.ACTIVE, CoflowState.PREEMPTED)]

    def _lookup(self, coflow_id: str) -> Coflow:
        try:
            return self.coflows[coflow_id]
        except KeyError:
            raise SchedulerError(f"unknown coflow {coflow_id}") from None

    def priority_order(self, coflows: Optional[Iterable[Coflow]] = None) -> List[Coflow]:
        """Deadline coflows first by decreasing deadline, the rest by increasing remaining Gamma."""
        coflows = self.active() if coflows is None else list(coflows)
        keyed = []
        for c in coflows:
            gamma = standalone_gamma(c, self.graph, self.cfg, self.optimizer, self.masks)
            if c.has_deadline:
                keyed.append(((0, -c.absolute_deadline, gamma, c.arrival, c.coflow_id), c))
            else:
                keyed.append(((1, 0.0, gamma, c.arrival, c.coflow_id), c))
        return [c for _, c in sorted(keyed, key=lambda item: item[0])]

    # ---- rounds ------------------------------------------------------------

    def _live_pins(self) -> Dict[str, Allocation]:
        pins = {}
        for cid, alloc in self.pinned.items():
            c = self.coflows[cid]
            groups = {k: ga for k, ga in alloc.groups.items() if not c.groups[(k[1], k[2])].finished}
            if groups:
                pins[cid] = Allocation(cid, alloc.gamma, groups)
        return pins

    def _commit(self, schedule: Schedule, trigger: str) -> Schedule:
        schedule.trigger = trigger
        schedule.time = self.now
        schedule.rejected = list(self.rejected)
        for c in self.active():
            c.state = CoflowState.ACTIVE if schedule.coflow_rate(c.coflow_id) > 0 else CoflowState.PREEMPTED
        self.schedule = schedule
        self.rounds += 1
        logger.round(f"t={self.now:.6g} {trigger}: {len(schedule.allocations)} scheduled, "
                     f"{len(schedule.failed)} parked, {schedule.lp_solves} LPs")
        if self.trace is not None:
            self.trace.append(schedule.to_record())
        return schedule

    def reschedule(self, trigger: str) -> Schedule:
        solves_before = self.optimizer.lp_solves
        order = self.priority_order()
        schedule = alloc_bandwidth(order, self.graph, self.cfg, self.optimizer, self.now,
                                   fixed=self._live_pins(), masks=self.masks)
        schedule.lp_solves = self.optimizer.lp_solves - solves_before
        return self._commit(schedule, trigger)

    def _restricted(self, finished_key: GroupKey) -> Schedule:
        """Re-optimize only the coflows whose allocations touched the freed arcs."""
        previous = self.schedule
        freed = previous.group_arcs(finished_key)
        pins = self._live_pins()
        active = {c.coflow_id: c for c in self.active()}
        kept: Dict[str, Allocation] = {}
        for cid, alloc in previous.allocations.items():
            if cid in pins or cid not in active:
                continue
            alloc = alloc.without(finished_key)
            if alloc.groups and not alloc.arcs() & freed:
                kept[cid] = alloc
        # parked coflows and coflows sharing a freed arc are re-solved
        affected = [active[cid] for cid in sorted(active) if cid not in pins and cid not in kept]
        solves_before = self.optimizer.lp_solves
        order = self.priority_order(affected)
        schedule = alloc_bandwidth(order, self.graph, self.cfg, self.optimizer, self.now,
                                   fixed={**pins, **kept}, masks=self.masks,
                                   conserve=[active[cid] for cid in sorted(kept)])
        schedule.lp_solves = self.optimizer.lp_solves - solves_before
        return self._commit(schedule, "flowgroup_finished")

    # ---- admission ---------------------------------------------------------

    def _admission_graph(self, exclude: Optional[str] = None) -> WanGraph:
        pins = {cid: a for cid, a in self._live_pins().items() if cid != exclude}
        return self.graph.scaled(1.0 - self.cfg.alpha).subtract(schedule_arc_totals(pins.values()), clamp=True)

    def _reserve(self, c: Coflow, alloc: Allocation) -> Allocation:
        """Stretch ``alloc`` to finish exactly at the deadline, within raw link capacity."""
        left = c.absolute_deadline - self.now
        factor = alloc.gamma / left if left > 0 else 1.0
        if factor > 1.0:
            others = schedule_arc_totals(a for cid, a in self._live_pins().items() if cid != c.coflow_id)
            for arc, rate in alloc.arc_totals().items():
                if rate > 0:
                    factor = min(factor, (self.graph.capacity(arc) - others.get(arc, 0.0)) / rate)
            factor = max(factor, 1.0)
        return alloc.scaled(factor)

    def _admit(self, c: Coflow) -> bool:
        groups = c.remaining_groups()
        alloc = self.optimizer.min_cct(groups, self._admission_graph(),
                                       self.masks.for_pairs(grp.pair for grp in groups))
        left = c.absolute_deadline - self.now
        if alloc is None or alloc.gamma > self.cfg.eta * left:
            gamma = math.inf if alloc is None else alloc.gamma
            logger.info(f"reject {c.coflow_id}: gamma={gamma:.6g}s > {self.cfg.eta}*{left:.6g}s")
            c.state = CoflowState.REJECTED
            self.rejected.append(c.coflow_id)
            return False
        c.admitted = True
        self.pinned[c.coflow_id] = self._reserve(c, alloc)
        logger.info(f"admit {c.coflow_id}: gamma={alloc.gamma:.6g}s deadline={left:.6g}s")
        return True

    def _repin(self, cid: str):
        """Re-solve a reservation that the current WAN can no longer carry."""
        c = self.coflows[cid]
        groups = c.remaining_groups()
        if not groups:
            return
        alloc = self.optimizer.min_cct(groups, self._admission_graph(exclude=cid),
                                       self.masks.for_pairs(grp.pair for grp in groups))
        if alloc is None:
            logger.warning(f"{cid}: reservation lost, deadline can no longer be guaranteed")
            c.deadline_missed = True
            self.pinned.pop(cid, None)
            return
        if alloc.gamma > self.cfg.eta * (c.absolute_deadline - self.now):
            logger.warning(f"{cid}: deadline missed, continuing at gamma={alloc.gamma:.6g}s")
            c.deadline_missed = True
            self.pinned[cid] = alloc
        else:
            self.pinned[cid] = self._reserve(c, alloc)

    def _pins_fit(self, cid: str) -> bool:
        alloc = self.pinned[cid]
        for arc, rate in alloc.arc_totals().items():
            link = self.graph.links.get(arc)
            if link is None or not link.up or rate > link.capacity * (1.0 - self.cfg.alpha) * (1 + self.cfg.epsilon):
                return False
        return True

    # ---- events ------------------------------------------------------------

    def on_arrivals(self, coflows: Iterable[Coflow], now: float) -> Dict[str, bool]:
        """Admit a batch of coflows arriving together and reschedule once."""
        self.now = max(self.now, now)
        decisions = {}
        for c in coflows:
            if c.coflow_id in self.coflows:
                raise SchedulerError(f"duplicate coflow id {c.coflow_id}")
            self.coflows[c.coflow_id] = c
            if c.has_deadline:
                decisions[c.coflow_id] = self._admit(c)
            else:
                decisions[c.coflow_id] = True
            if decisions[c.coflow_id]:
                c.state = CoflowState.ACTIVE
        if any(decisions.values()):
            self.reschedule("arrival")
        return decisions

    def on_arrival(self, c: Coflow, now: float) -> bool:
        return self.on_arrivals([c], now)[c.coflow_id]

    def on_update(self, coflow_id: str, new_flows: Iterable[Flow], now: float) -> Schedule:
        self.now = max(self.now, now)
        c = self._lookup(coflow_id)
        update_coflow(c, new_flows)
        if c.coflow_id in self.pinned:
            self._repin(c.coflow_id)
        return self.reschedule("update")

    def on_event(self, e: SchedulerEvent) -> Schedule:
        self.now = max(self.now, e.time)
        if isinstance(e, FlowGroupFinished):
            return self._on_group_finished(e)
        if isinstance(e, CoflowFinished):
            return self._on_coflow_finished(e.coflow_id)
        if isinstance(e, WanEvent):
            return self._on_wan_event(e)
        raise SchedulerError(f"unsupported event {e!r}")

    def _on_group_finished(self, e: FlowGroupFinished) -> Schedule:
        c = self._lookup(e.key[0])
        group = c.groups.get((e.key[1], e.key[2]))
        if group is None:
            raise SchedulerError(f"unknown flow group {e.key}")
        if c.state == CoflowState.FINISHED:
            raise SchedulerError(f"coflow {c.coflow_id} already finished")
        if c.finished:
            return self._on_coflow_finished(c.coflow_id)
        if c.coflow_id in self.pinned:
            self.pinned[c.coflow_id] = self.pinned[c.coflow_id].without(e.key)
        return self._restricted(e.key)

    def _on_coflow_finished(self, coflow_id: str) -> Schedule:
        c = self._lookup(coflow_id)
        if c.state == CoflowState.FINISHED:
            raise SchedulerError(f"coflow {coflow_id} already finished")
        c.state = CoflowState.FINISHED
        c.finish_time = self.now
        self.pinned.pop(coflow_id, None)
        self.finished.append((coflow_id, self.now))
        return self.reschedule("coflow_finished")

    def _on_wan_event(self, e: WanEvent) -> Schedule:
        link = self.graph.link(e.link)
        self.graph = apply_event(self.graph, e)
        new = self.graph.link(e.link).effective
        if e.kind == WanEventKind.BANDWIDTH_CHANGE and link.effective > 0 and new > 0 and \
                not significant_change(link.effective, new, self.cfg.rho):
            carried = self.schedule.arc_totals().get(e.link, 0.0)
            if carried <= new * (1 + 1e-9):
                logger.debug(f"{e.link}: {link.effective:.4g} -> {new:.4g} B/s below rho, schedule kept")
                return self.schedule
            logger.debug(f"{e.link}: below rho but the schedule carries {carried:.4g} B/s, rescheduling")
        if e.kind == WanEventKind.LINK_RECOVER and link.up:
            return self.schedule
        self.masks.reset(self.graph)
        for cid in sorted(self.pinned):
            if not self._pins_fit(cid):
                self._repin(cid)
        return self.reschedule(e.kind.value)
