#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/03 14:10
@File    : optimizer.py

Rate optimizations over FlowGroups.

``min_cct`` solves the joint routing/rate LP of a single coflow on a residual
graph. The completion time appears inverted in the constraints, so the LP is
written over the progress rate lambda = 1/Gamma: every group pushes
``remaining * lambda`` bytes/s out of its source and lambda is maximized. A
second solve at the optimal lambda minimizes total arc rate, which removes
detours and circulations before paths are extracted.

``max_min_mcf`` water-fills the rate fraction (rate / remaining bytes) of a
set of groups from possibly many coflows; it is the work-conservation step of
the scheduler and the whole of the SWAN-style baseline.
"""
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import networkx as nx

from src.coflow_model import FlowGroup, GroupKey, Pair
from src.lp_engine import LinearProgram, LpStatus, Sense, solve
from src.wan_topology import Arc, NodePath, WanGraph, k_shortest_paths, path_arcs
from utils.errors import OptimizerError
from utils.log import Logger

logger = Logger('Optimizer')

TAU = 1e-7
LAMBDA_SLACK = 1e-9
FREEZE_SLACK = 1e-9
TIGHT_TOL = 1e-6
ZERO_RATE = 1e-10

PathRates = List[Tuple[NodePath, float]]


@dataclass
class GroupAllocation:
    key: GroupKey
    arc_rates: Dict[Arc, float] = field(default_factory=dict)
    paths: PathRates = field(default_factory=list)

    @property
    def rate(self) -> float:
        return sum(r for _, r in self.paths)

    def scaled(self, factor: float) -> "GroupAllocation":
        return GroupAllocation(self.key, {a: r * factor for a, r in self.arc_rates.items()},
                               [(p, r * factor) for p, r in self.paths])


@dataclass
class Allocation:
    coflow_id: str
    gamma: float
    groups: Dict[GroupKey, GroupAllocation] = field(default_factory=dict)

    def arc_totals(self) -> Dict[Arc, float]:
        return sum_arc_rates(self.groups.values())

    def arcs(self) -> Set[Arc]:
        return {a for ga in self.groups.values() for a, r in ga.arc_rates.items() if r > 0}

    @property
    def rate(self) -> float:
        return sum(ga.rate for ga in self.groups.values())

    def scaled(self, factor: float) -> "Allocation":
        """Rates times ``factor``; Gamma stretches accordingly."""
        if factor <= 0:
            raise OptimizerError(f"scale factor must be positive, got {factor}")
        return Allocation(self.coflow_id, self.gamma / factor,
                          {k: ga.scaled(factor) for k, ga in self.groups.items()})

    def without(self, key: GroupKey) -> "Allocation":
        return Allocation(self.coflow_id, self.gamma, {k: ga for k, ga in self.groups.items() if k != key})

    def to_record(self) -> Dict:
        return {
            "gamma": self.gamma,
            "paths": [{"group": f"{k[1]}->{k[2]}", "hops": list(p), "bytes_per_s": r}
                      for k, ga in sorted(self.groups.items()) for p, r in ga.paths],
        }


def sum_arc_rates(allocations: Iterable[GroupAllocation]) -> Dict[Arc, float]:
    totals: Dict[Arc, float] = {}
    for ga in allocations:
        for arc, rate in ga.arc_rates.items():
            totals[arc] = totals.get(arc, 0.0) + rate
    return totals


@dataclass
class ArcMask:
    """Permitted arcs per (src, dst) pair; everything else is forced to zero."""
    allowed: Dict[Pair, FrozenSet[Arc]] = field(default_factory=dict)

    def arcs_for(self, pair: Pair) -> FrozenSet[Arc]:
        try:
            return self.allowed[pair]
        except KeyError:
            raise OptimizerError(f"arc mask has no entry for {pair[0]}->{pair[1]}") from None

    def validate(self, g: WanGraph, pairs: Optional[Iterable[Pair]] = None):
        for pair in (pairs if pairs is not None else self.allowed):
            for arc in self.arcs_for(pair):
                if arc not in g.links:
                    raise OptimizerError(f"arc mask for {pair} references unknown arc {arc}")
                if not g.links[arc].up:
                    raise OptimizerError(f"arc mask for {pair} references down arc {arc}")


def build_arc_mask(groups: Iterable[Union[FlowGroup, Pair]], g: WanGraph, k: int) -> ArcMask:
    allowed: Dict[Pair, FrozenSet[Arc]] = {}
    for item in groups:
        pair = item.pair if isinstance(item, FlowGroup) else tuple(item)
        if pair not in allowed:
            allowed[pair] = frozenset(a for p in k_shortest_paths(g, pair[0], pair[1], k) for a in path_arcs(p))
    return ArcMask(allowed)


def _reachable(arcs: Iterable[Arc], src: str, dst: str) -> bool:
    graph = nx.DiGraph(list(arcs))
    return src in graph and dst in graph and nx.has_path(graph, src, dst)


def decompose_paths(rates: Mapping[Arc, float], src: str, dst: str, tau: float = TAU,
                    scale: Optional[float] = None) -> PathRates:
    """Split a single-commodity arc flow into (path, rate) pairs.

    Tracing always follows the lexicographically smallest next node with
    positive residual. Circulations met on the way are cancelled and count as
    discarded volume, which must stay below ``tau`` times ``scale``.
    """
    residual = {arc: float(r) for arc, r in rates.items() if r > 0}
    if not residual:
        return []
    scale = scale if scale is not None else max(residual.values())
    tol = tau * max(scale, 1e-300)

    balance: Dict[str, float] = {}
    for (u, v), r in residual.items():
        balance[u] = balance.get(u, 0.0) - r
        balance[v] = balance.get(v, 0.0) + r
    for node, net in balance.items():
        if node not in (src, dst) and abs(net) > tol:
            raise OptimizerError(f"flow conservation violated at {node} by {net:.6g}")

    successors: Dict[str, List[str]] = {}
    for u, v in sorted(residual):
        successors.setdefault(u, []).append(v)

    def next_hop(node: str) -> Optional[str]:
        for nxt in successors.get(node, ()):
            if residual[(node, nxt)] > tol:
                return nxt
        return None

    paths: Dict[NodePath, float] = {}
    discarded = 0.0
    for _ in range(4 * len(residual) + 4):
        if next_hop(src) is None:
            break
        path = [src]
        position = {src: 0}
        while path[-1] != dst:
            nxt = next_hop(path[-1])
            if nxt is None:
                break
            if nxt in position:
                cycle = path[position[nxt]:] + [nxt]
                arcs = path_arcs(tuple(cycle))
                bottleneck = min(residual[a] for a in arcs)
                for a in arcs:
                    residual[a] -= bottleneck
                discarded += bottleneck
                path = None
                break
            position[nxt] = len(path)
            path.append(nxt)
        if path is None:
            continue
        if path[-1] != dst:
            # dead end: only possible with numerical residue
            arc = (path[-2], path[-1])
            discarded += residual[arc]
            residual[arc] = 0.0
            continue
        arcs = path_arcs(tuple(path))
        bottleneck = min(residual[a] for a in arcs)
        for a in arcs:
            residual[a] -= bottleneck
        key = tuple(path)
        paths[key] = paths.get(key, 0.0) + bottleneck
    leftover = max((r for r in residual.values()), default=0.0)
    if discarded > tol or leftover > tol:
        if discarded > tau * sum(paths.values()) + tol or leftover > tol * 10:
            raise OptimizerError(f"flow {src}->{dst} holds {max(discarded, leftover):.6g} bytes/s of circulation")
        logger.debug(f"dropped {discarded:.3g} bytes/s of numerical circulation on {src}->{dst}")
    return [(p, r) for p, r in paths.items() if r > tol]


class _FlowProgram:
    """Arc-flow LP skeleton shared by the min-CCT and MCF formulations."""

    def __init__(self, name: str, groups: Sequence[FlowGroup], arcsets: Sequence[List[Arc]], g: WanGraph,
                 cmax: float):
        self.lp = LinearProgram(name)
        self.groups = groups
        self.cmax = cmax
        self.weights = [grp.remaining / cmax for grp in groups]
        self.vars: List[Dict[Arc, int]] = []
        load: Dict[Arc, List[int]] = {}
        for gi, (grp, arcs) in enumerate(zip(groups, arcsets)):
            table: Dict[Arc, int] = {}
            for arc in arcs:
                table[arc] = self.lp.add_variable(f"f{gi}_{arc[0]}_{arc[1]}")
                load.setdefault(arc, []).append(table[arc])
            self.vars.append(table)
            nodes = sorted({n for arc in arcs for n in arc} - {grp.src, grp.dst})
            for node in nodes:
                row = {i: 1.0 for (u, v), i in table.items() if v == node}
                row.update({i: -1.0 for (u, v), i in table.items() if u == node})
                self.lp.add_constraint(row, Sense.EQ, 0.0, f"flow{gi}_{node}")
        for arc in sorted(load):
            self.lp.add_constraint({i: 1.0 for i in load[arc]}, Sense.LE, g.capacity(arc) / cmax,
                                   f"cap_{arc[0]}_{arc[1]}")

    def outflow(self, gi: int) -> Dict[int, float]:
        src = self.groups[gi].src
        return {i: 1.0 for (u, v), i in self.vars[gi].items() if u == src}

    def total_flow(self) -> Dict[int, float]:
        return {i: 1.0 for table in self.vars for i in table.values()}

    def arc_rates(self, values, gi: int) -> Dict[Arc, float]:
        return {arc: float(values[i]) * self.cmax for arc, i in self.vars[gi].items() if values[i] > ZERO_RATE}


class CoflowOptimizer:
    """Holds the tolerance and counts every LP solved through it."""

    def __init__(self, tau: float = TAU):
        self.tau = tau
        self.lp_solves = 0

    def _solve(self, lp: LinearProgram):
        self.lp_solves += 1
        return solve(lp)

    def _group_arcs(self, grp: FlowGroup, g: WanGraph, mask: Optional[ArcMask]) -> List[Arc]:
        candidates = mask.arcs_for(grp.pair) if mask is not None else g.up_arcs()
        return sorted(a for a in candidates
                      if g.capacity(a) > 0 and a[1] != grp.src and a[0] != grp.dst)

    def _prepare(self, groups: Iterable[FlowGroup], g: WanGraph, mask: Optional[ArcMask]):
        groups = sorted(groups, key=lambda grp: grp.key)
        for grp in groups:
            if grp.remaining <= 0:
                raise OptimizerError(f"group {grp.key} has no remaining volume")
        if mask is not None:
            mask.validate(g, {grp.pair for grp in groups})
        arcsets = [self._group_arcs(grp, g, mask) for grp in groups]
        connected = [_reachable(arcs, grp.src, grp.dst) for grp, arcs in zip(groups, arcsets)]
        return groups, arcsets, connected

    def _allocations(self, program: _FlowProgram, values) -> Dict[GroupKey, GroupAllocation]:
        result = {}
        for gi, grp in enumerate(program.groups):
            rates = program.arc_rates(values, gi)
            paths = decompose_paths(rates, grp.src, grp.dst, self.tau, program.cmax) if rates else []
            result[grp.key] = GroupAllocation(grp.key, rates, paths)
        return result

    def min_cct(self, groups: Iterable[FlowGroup], g: WanGraph, mask: Optional[ArcMask] = None) -> Optional[Allocation]:
        """Minimum completion time of one coflow on ``g``; ``None`` when infeasible."""
        groups, arcsets, connected = self._prepare(groups, g, mask)
        if not groups:
            raise OptimizerError("min_cct needs at least one FlowGroup")
        cmax = g.max_capacity()
        if cmax <= 0 or not all(connected):
            return None
        program = _FlowProgram(f"mincct_{groups[0].coflow_id}", groups, arcsets, g, cmax)
        lp = program.lp
        lam = lp.add_variable("lambda")
        for gi in range(len(groups)):
            row = program.outflow(gi)
            row[lam] = -program.weights[gi]
            lp.add_constraint(row, Sense.EQ, 0.0, f"demand{gi}")
        lp.set_objective({lam: 1.0}, maximize=True)
        first = self._solve(lp)
        if not first.optimal or first.value(lam) <= 0:
            return None
        lam_star = first.value(lam)

        lp.add_constraint({lam: 1.0}, Sense.GE, lam_star * (1.0 - LAMBDA_SLACK), "lambda_floor")
        lp.set_objective(program.total_flow(), maximize=False)
        second = self._solve(lp)
        if not second.optimal:
            logger.warning(f"{lp.name}: clean-up solve returned {second.status}, keeping the first solution")
            second = first
        lam_final = second.value(lam)
        return Allocation(groups[0].coflow_id, 1.0 / lam_final, self._allocations(program, second.values))

    def max_min_mcf(self, groups: Iterable[FlowGroup], g: WanGraph,
                    mask: Optional[ArcMask] = None) -> Dict[GroupKey, GroupAllocation]:
        """Max-min fair rate fractions; disconnected groups get an empty allocation."""
        groups = [grp for grp in groups if grp.remaining > 0]
        if not groups:
            return {}
        groups, arcsets, connected = self._prepare(groups, g, mask)
        result = {grp.key: GroupAllocation(grp.key) for grp in groups}
        cmax = g.max_capacity()
        live = [i for i, ok in enumerate(connected) if ok]
        if cmax <= 0 or not live:
            return result
        groups = [groups[i] for i in live]
        arcsets = [arcsets[i] for i in live]
        n = len(groups)
        frozen: Dict[int, float] = {}

        def program_with(name: str, floor: Optional[float]):
            program = _FlowProgram(name, groups, arcsets, g, cmax)
            for gi, fraction in frozen.items():
                program.lp.add_constraint(program.outflow(gi), Sense.EQ,
                                          program.weights[gi] * fraction * (1.0 - FREEZE_SLACK), f"frozen{gi}")
            if floor is not None:
                for gi in range(n):
                    if gi not in frozen:
                        program.lp.add_constraint(program.outflow(gi), Sense.GE,
                                                  program.weights[gi] * floor * (1.0 - FREEZE_SLACK), f"floor{gi}")
            return program

        def fraction_of(program: _FlowProgram, values, gi: int) -> float:
            return sum(values[i] for i in program.outflow(gi)) / program.weights[gi]

        for _ in range(n):
            unfrozen = [gi for gi in range(n) if gi not in frozen]
            if not unfrozen:
                break
            program = program_with("mcf_level", None)
            t = program.lp.add_variable("t")
            for gi in unfrozen:
                row = program.outflow(gi)
                row[t] = -program.weights[gi]
                program.lp.add_constraint(row, Sense.GE, 0.0, f"level{gi}")
            program.lp.set_objective({t: 1.0}, maximize=True)
            level = self._solve(program.lp)
            t_star = level.value(t) if level.optimal else 0.0
            if t_star <= ZERO_RATE:
                # some group cannot grow at all; freeze only those
                stuck = []
                for gi in unfrozen:
                    probe = program_with(f"mcf_probe{gi}", None)
                    probe.lp.set_objective(probe.outflow(gi), maximize=True)
                    best = self._solve(probe.lp)
                    if not best.optimal or fraction_of(probe, best.values, gi) <= ZERO_RATE:
                        stuck.append(gi)
                frozen.update({gi: 0.0 for gi in (stuck or unfrozen)})
                if not stuck:
                    break
                continue

            program = program_with("mcf_spread", t_star)
            program.lp.set_objective({i: 1.0 / program.weights[gi] for gi in unfrozen
                                      for i in program.outflow(gi)}, maximize=True)
            spread = self._solve(program.lp)
            if spread.optimal:
                candidates = [gi for gi in unfrozen
                              if fraction_of(program, spread.values, gi) <= t_star * (1.0 + TIGHT_TOL)]
            else:
                candidates = list(unfrozen)

            tight = []
            for gi in candidates:
                probe = program_with(f"mcf_probe{gi}", t_star)
                probe.lp.set_objective(probe.outflow(gi), maximize=True)
                best = self._solve(probe.lp)
                if not best.optimal or fraction_of(probe, best.values, gi) <= t_star * (1.0 + TIGHT_TOL):
                    tight.append(gi)
            if not tight:
                tight = candidates or [min(unfrozen)]
            frozen.update({gi: t_star for gi in tight})

        program = program_with("mcf_final", None)
        program.lp.set_objective(program.total_flow(), maximize=False)
        final = self._solve(program.lp)
        if not final.optimal:
            logger.warning(f"max-min MCF final solve returned {final.status}; groups left idle")
            return result
        result.update(self._allocations(program, final.values))
        return result


def min_cct(groups: Iterable[FlowGroup], g: WanGraph, mask: Optional[ArcMask] = None) -> Optional[Allocation]:
    return CoflowOptimizer().min_cct(groups, g, mask)


def max_min_mcf(groups: Iterable[FlowGroup], g: WanGraph, mask: Optional[ArcMask] = None) -> Dict[GroupKey, GroupAllocation]:
    return CoflowOptimizer().max_min_mcf(groups, g, mask)
