#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/10 11:20
@File    : test_policies.py
"""
import pytest

from config.terra_config import SchedulerConfig
from src.flowsim import run
from src.policies import POLICIES, MultipathPolicy, PerFlowPolicy, TerraPolicy, make_policy, progressive_filling
from src.wan_topology import GBPS, load_topology
from src.workload import load
from utils.errors import ConfigError

GB = 10 ** 9


def test_progressive_filling():
    capacity = {("A", "B"): 10.0, ("B", "C"): 4.0}
    units = [("x", ("A", "B")), ("y", ("A", "B", "C")), ("z", ("B", "C"))]
    rates = progressive_filling(units, capacity)
    assert rates["y"] == pytest.approx(2.0)
    assert rates["z"] == pytest.approx(2.0)
    assert rates["x"] == pytest.approx(8.0)


def test_progressive_filling_skips_dead_paths():
    rates = progressive_filling([("x", ("A", "B"))], {("A", "B"): 0.0})
    assert rates == {"x": 0.0}


def test_registry():
    assert set(POLICIES) == {"terra", "perflow", "multipath", "varys", "swan_mcf"}
    policy = make_policy("perflow", SchedulerConfig(k=3))
    assert isinstance(policy, PerFlowPolicy)
    assert policy.name == "perflow"
    assert policy.config.k == 3
    assert policy.logger is not None
    with pytest.raises(ConfigError):
        make_policy("fastest")


def _pair_workload():
    return load({"name": "pair", "coflows": [
        {"id": "big", "arrival_s": 0.0, "flows": [{"id": "f", "src": "A", "dst": "B", "bytes": 10 * GB}]},
        {"id": "small", "arrival_s": 0.0, "flows": [{"id": "f", "src": "A", "dst": "B", "bytes": 2 * GB}]},
    ]})


def test_perflow_is_fair():
    result = run(_pair_workload(), load_topology("contention"), "perflow")
    outcomes = result.trace.outcomes
    # 0.625 GB/s each until the small one is done at 3.2 s
    assert outcomes["small"].cct == pytest.approx(3.2, rel=1e-6)
    assert outcomes["big"].cct == pytest.approx(9.6, rel=1e-6)


def test_varys_serves_smallest_bottleneck_first():
    result = run(_pair_workload(), load_topology("contention"), "varys")
    outcomes = result.trace.outcomes
    assert outcomes["small"].cct == pytest.approx(1.6, rel=1e-6)
    assert outcomes["big"].cct == pytest.approx(9.6, rel=1e-6)


def test_terra_bypass_uses_leftover():
    cfg = SchedulerConfig(alpha=0.0, bypass_bytes=GB)
    workload = load({"name": "bypass", "coflows": [
        {"id": "tiny", "arrival_s": 0.0, "flows": [{"id": "f", "src": "B", "dst": "C", "bytes": GB // 2}]},
        {"id": "main", "arrival_s": 0.0, "flows": [{"id": "f", "src": "A", "dst": "B", "bytes": 5 * GB}]},
    ]})
    policy = make_policy("terra", cfg)
    assert isinstance(policy, TerraPolicy)
    result = run(workload, load_topology("contention"), policy)
    assert result.trace.outcomes["main"].cct == pytest.approx(2.0, rel=1e-6)
    # B->C is idle while main runs
    assert result.trace.outcomes["tiny"].cct == pytest.approx(0.5 / (10 * GBPS / GB), rel=1e-6)


def _split_topology():
    links = [("A", "B"), ("A", "C"), ("C", "B"), ("D", "C")]
    return load_topology({"nodes": ["A", "B", "C", "D"],
                          "links": [{"src": u, "dst": v, "gbps": 10, "latency_ms": 1} for u, v in links]})


def test_multipath_splits_each_flow_equally():
    workload = load({"name": "split", "coflows": [
        {"id": "F", "arrival_s": 0.0, "flows": [{"id": "f", "src": "A", "dst": "B", "bytes": 10 * GB}]},
        {"id": "G", "arrival_s": 0.0, "flows": [{"id": "g", "src": "D", "dst": "B", "bytes": 10 * GB}]},
    ]})
    result = run(workload, _split_topology(), "multipath")
    outcomes = result.trace.outcomes
    # 5 GB alone on A->B is done at 4 s, the 5 GB through C shares C->B with G until 8 s
    assert outcomes["F"].cct == pytest.approx(8.0, rel=1e-6)
    assert outcomes["G"].cct == pytest.approx(12.0, rel=1e-6)
    assert result.metrics.capacity_violations == 0
    assert result.metrics.conservation_error < 1e-6


def test_multipath_single_path_matches_perflow():
    workload = _pair_workload()
    single = run(workload, load_topology("contention"), MultipathPolicy(config=SchedulerConfig(k=1))).trace.outcomes
    assert single["small"].cct == pytest.approx(3.2, rel=1e-6)
    assert single["big"].cct == pytest.approx(9.6, rel=1e-6)


def test_multipath_resplits_after_a_failure():
    workload = load({"name": "resplit", "coflows": [
        {"id": "F", "arrival_s": 0.0, "flows": [{"id": "f", "src": "A", "dst": "B", "bytes": 10 * GB}]}],
        "wan_events": [{"t": 2.0, "kind": "link_fail", "src": "A", "dst": "C"}]})
    result = run(workload, _split_topology(), "multipath")
    # 5 GB moved by 2 s, the other 5 GB over A->B alone
    assert result.trace.outcomes["F"].cct == pytest.approx(6.0, rel=1e-6)
    assert result.metrics.capacity_violations == 0
