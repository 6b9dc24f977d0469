#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/08 16:20
@File    : test_optimizer.py
"""
import networkx as nx
import numpy as np
import pytest

from src.coflow_model import FlowGroup, Flow, group_flows
from src.optimizer import ArcMask, CoflowOptimizer, build_arc_mask, decompose_paths, max_min_mcf, min_cct
from src.wan_topology import GBPS, Link, WanGraph, load_topology
from utils.errors import OptimizerError

GB = 10 ** 9


def _flowgroup_instance():
    flows = [Flow(f"b{i}", "B", "A", GB) for i in range(10)] + [Flow(f"c{i}", "C", "A", GB) for i in range(6)]
    return group_flows(flows, "c1")


def test_flowgroup_instance_gamma():
    g = load_topology("flowgroup")
    alloc = min_cct(_flowgroup_instance(), g)
    assert alloc.gamma == pytest.approx(8.0, rel=1e-6)
    totals = alloc.arc_totals()
    assert totals[("B", "A")] == pytest.approx(g.capacity(("B", "A")), rel=1e-6)
    assert totals[("C", "A")] == pytest.approx(g.capacity(("C", "A")), rel=1e-6)


def test_single_flow_uses_both_paths():
    g = load_topology("contention")
    alloc = min_cct([FlowGroup.of("c", "A", "B", 5 * GB)], g)
    assert alloc.gamma == pytest.approx(2.0, rel=1e-6)
    paths = dict(alloc.groups[("c", "A", "B")].paths)
    assert set(paths) == {("A", "B"), ("A", "C", "B")}
    assert paths[("A", "B")] == pytest.approx(10 * GBPS, rel=1e-6)


def test_mask_restricts_routing():
    g = load_topology("contention")
    group = FlowGroup.of("c", "A", "B", 5 * GB)
    alloc = min_cct([group], g, build_arc_mask([group], g, 1))
    assert alloc.gamma == pytest.approx(4.0, rel=1e-6)
    assert alloc.arcs() == {("A", "B")}


def test_scaling_laws():
    g = load_topology("swan")
    groups = [FlowGroup.of("c", "NY", "HK", 3 * GB), FlowGroup.of("c", "BA", "WA", 2 * GB)]
    base = min_cct(groups, g).gamma
    doubled = [FlowGroup.of("c", "NY", "HK", 6 * GB), FlowGroup.of("c", "BA", "WA", 4 * GB)]
    assert min_cct(doubled, g).gamma == pytest.approx(2 * base, rel=1e-6)
    assert min_cct(groups, g.scaled(2.0)).gamma == pytest.approx(base / 2, rel=1e-6)


@pytest.mark.parametrize("pair", [("NY", "HK"), ("BA", "WA"), ("HK", "BA"), ("LA", "NY")])
def test_single_group_matches_max_flow(pair):
    g = load_topology("swan")
    graph = nx.DiGraph()
    for (u, v), link in g.links.items():
        graph.add_edge(u, v, capacity=link.capacity)
    volume = 7 * GB
    expected = volume / nx.maximum_flow_value(graph, pair[0], pair[1])
    alloc = min_cct([FlowGroup.of("c", pair[0], pair[1], volume)], g)
    assert alloc.gamma == pytest.approx(expected, rel=1e-6)


def test_allocation_respects_capacity_and_conservation():
    g = load_topology("swan")
    groups = [FlowGroup.of("c", "NY", "HK", 3 * GB), FlowGroup.of("c", "HK", "NY", 1 * GB),
              FlowGroup.of("c", "BA", "HK", 5 * GB)]
    alloc = min_cct(groups, g)
    for arc, rate in alloc.arc_totals().items():
        assert rate <= g.capacity(arc) * (1 + 1e-6)
    for grp in groups:
        ga = alloc.groups[grp.key]
        out = sum(r for (u, _), r in ga.arc_rates.items() if u == grp.src)
        assert ga.rate == pytest.approx(out, rel=1e-6)
        # equal progress: every group finishes at gamma
        assert grp.remaining / ga.rate == pytest.approx(alloc.gamma, rel=1e-6)
        assert all(len(set(p)) == len(p) for p, _ in ga.paths)


def test_infeasible_returns_none():
    g = WanGraph(["A", "B", "C"], [Link("A", "B", GBPS, 1)])
    assert min_cct([FlowGroup.of("c", "A", "C", GB)], g) is None
    failed = load_topology("contention").scaled(0.0)
    assert min_cct([FlowGroup.of("c", "A", "B", GB)], failed) is None


def test_malformed_mask():
    g = load_topology("contention")
    group = FlowGroup.of("c", "A", "B", GB)
    with pytest.raises(OptimizerError):
        min_cct([group], g, ArcMask({("A", "B"): frozenset({("A", "Z")})}))
    with pytest.raises(OptimizerError):
        min_cct([group], g, ArcMask({}))


def test_lp_counter():
    optimizer = CoflowOptimizer()
    optimizer.min_cct([FlowGroup.of("c", "A", "B", GB)], load_topology("contention"))
    assert optimizer.lp_solves == 2


def test_decompose_paths():
    rates = {("s", "a"): 3.0, ("a", "t"): 3.0, ("s", "t"): 2.0}
    assert decompose_paths(rates, "s", "t") == [(("s", "a", "t"), 3.0), (("s", "t"), 2.0)]


def test_decompose_cancels_numerical_cycles():
    rates = {("s", "a"): 2.0, ("a", "b"): 1e-9, ("b", "a"): 1e-9, ("a", "t"): 2.0}
    paths = decompose_paths(rates, "s", "t", tau=1e-7, scale=2.0)
    assert paths == [(("s", "a", "t"), pytest.approx(2.0))]


def test_decompose_rejects_bad_flows():
    with pytest.raises(OptimizerError):
        decompose_paths({("s", "a"): 2.0, ("a", "t"): 1.0}, "s", "t")
    with pytest.raises(OptimizerError):
        decompose_paths({("s", "a"): 2.0, ("a", "b"): 1.0, ("b", "a"): 1.0, ("a", "t"): 2.0}, "s", "t")


def test_mcf_shares_by_volume():
    g = WanGraph(["A", "B"], [Link("A", "B", 10 * GBPS, 1)])
    small = FlowGroup.of("c1", "A", "B", GB)
    large = FlowGroup.of("c2", "A", "B", 3 * GB)
    rates = max_min_mcf([small, large], g)
    assert rates[small.key].rate == pytest.approx(2.5 * GBPS, rel=1e-6)
    assert rates[large.key].rate == pytest.approx(7.5 * GBPS, rel=1e-6)


def test_mcf_max_min_levels():
    # c1 is capped by its own 2 Gbps link, c2 takes the rest of the shared link
    g = WanGraph(["A", "B", "C"], [Link("A", "B", 10 * GBPS, 1), Link("C", "A", 2 * GBPS, 1)])
    g2 = WanGraph(g.nodes, list(g.links.values()) + [Link("C", "B", 0.0, 1)])
    slow = FlowGroup.of("c1", "C", "B", GB)
    fast = FlowGroup.of("c2", "A", "B", GB)
    rates = max_min_mcf([slow, fast], g2)
    assert rates[slow.key].rate == pytest.approx(2 * GBPS, rel=1e-6)
    assert rates[fast.key].rate == pytest.approx(8 * GBPS, rel=1e-6)


def test_mcf_disconnected_group_is_idle():
    g = WanGraph(["A", "B", "C"], [Link("A", "B", 10 * GBPS, 1), Link("C", "B", 0.0, 1)])
    idle = FlowGroup.of("c1", "C", "B", GB)
    busy = FlowGroup.of("c2", "A", "B", GB)
    rates = max_min_mcf([idle, busy], g)
    assert rates[idle.key].paths == []
    assert rates[busy.key].rate == pytest.approx(10 * GBPS, rel=1e-6)


def test_mcf_empty():
    assert max_min_mcf([], load_topology("contention")) == {}


def _random_graph(seed: int):
    rng = np.random.default_rng(seed)
    nodes = [f"n{i}" for i in range(int(rng.integers(3, 7)))]
    links = [Link(u, v, int(rng.integers(1, 11)) * GBPS, int(rng.integers(1, 50)) * 10 ** 6)
             for u in nodes for v in nodes if u != v and rng.random() < 0.5]
    g = WanGraph(nodes, links)
    digraph = nx.DiGraph()
    digraph.add_nodes_from(nodes)
    for (u, v), link in g.links.items():
        digraph.add_edge(u, v, capacity=link.capacity)
    pairs = [(u, v) for u in nodes for v in nodes if u != v and nx.has_path(digraph, u, v)]
    rng.shuffle(pairs)
    return g, digraph, pairs, rng


@pytest.mark.parametrize("seed", range(50))
def test_random_single_group_matches_max_flow(seed):
    g, digraph, pairs, rng = _random_graph(seed)
    if not pairs:
        pytest.skip("no connected pair")
    src, dst = pairs[0]
    volume = int(rng.integers(1, 50)) * GB
    alloc = min_cct([FlowGroup.of("c", src, dst, volume)], g)
    assert alloc.gamma == pytest.approx(volume / nx.maximum_flow_value(digraph, src, dst), rel=1e-6)


@pytest.mark.parametrize("seed", range(20))
def test_random_allocations_keep_their_invariants(seed):
    g, _, pairs, rng = _random_graph(100 + seed)
    if not pairs:
        pytest.skip("no connected pair")
    groups = [FlowGroup.of("c", u, v, int(rng.integers(1, 20)) * GB) for u, v in pairs[:3]]
    alloc = min_cct(groups, g)
    for arc, rate in alloc.arc_totals().items():
        assert rate <= g.capacity(arc) * (1 + 1e-6)
    for grp in groups:
        ga = alloc.groups[grp.key]
        balance = {}
        for (u, v), r in ga.arc_rates.items():
            assert r >= -1e-6 * ga.rate
            balance[u] = balance.get(u, 0.0) - r
            balance[v] = balance.get(v, 0.0) + r
        for node, net in balance.items():
            if node not in grp.pair:
                assert abs(net) <= 1e-6 * ga.rate
        assert -balance[grp.src] == pytest.approx(ga.rate, rel=1e-6)
        assert grp.remaining / ga.rate == pytest.approx(alloc.gamma, rel=1e-6)


@pytest.mark.parametrize("seed", range(20))
def test_random_decomposition_reaggregates(seed):
    rng = np.random.default_rng(seed)
    nodes = [f"n{i}" for i in range(6)]
    rates = {}
    for _ in range(int(rng.integers(1, 8))):
        # forward hops only, so the flow has no cycles
        middle = sorted(rng.choice(range(1, 5), size=int(rng.integers(0, 4)), replace=False))
        hops = [nodes[0]] + [nodes[i] for i in middle] + [nodes[5]]
        rate = float(rng.uniform(0.1, 10.0)) * GBPS
        for arc in zip(hops, hops[1:]):
            rates[arc] = rates.get(arc, 0.0) + rate
    paths = decompose_paths(rates, nodes[0], nodes[5], tau=1e-7, scale=max(rates.values()))
    merged = {}
    for path, rate in paths:
        for arc in zip(path, path[1:]):
            merged[arc] = merged.get(arc, 0.0) + rate
    assert set(merged) == set(rates)
    for arc, rate in rates.items():
        assert abs(merged[arc] - rate) <= 1e-7 * max(rates.values())
