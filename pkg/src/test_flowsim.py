#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/09 14:30
@File    : test_flowsim.py
"""
from typing import ClassVar

import pytest

from base.base_policy import BasePolicy, RateAssignment
from config.terra_config import SchedulerConfig, SimulatorConfig
from src.flowsim import Metrics, read_metrics_csv, run, write_metrics_csv
from src.scenarios import flowgroup
from src.wan_topology import GBPS, load_topology
from src.workload import load

GB = 10 ** 9
EXACT = SchedulerConfig(alpha=0.0)


def _single(gigabytes=5, events=()):
    return load({"name": "single", "coflows": [
        {"id": "c", "arrival_s": 0.0, "flows": [{"id": "f", "src": "A", "dst": "B", "bytes": gigabytes * GB}]}],
        "wan_events": list(events)})


@pytest.mark.parametrize("policy,cct", [("perflow", 4.0), ("varys", 4.0), ("multipath", 2.0),
                                        ("swan_mcf", 2.0), ("terra", 2.0)])
def test_single_flow(policy, cct):
    result = run(_single(), load_topology("contention"), policy, scheduler_cfg=EXACT)
    m = result.metrics
    assert m.finished == 1
    assert m.avg_cct == pytest.approx(cct, rel=1e-6)
    assert m.capacity_violations == 0
    assert m.conservation_error < 1e-6


def test_utilization():
    m = run(_single(), load_topology("contention"), "perflow").metrics
    # one of six equal links busy for the whole run
    assert m.utilization == pytest.approx(1 / 6, rel=1e-6)
    assert m.makespan == pytest.approx(4.0, rel=1e-6)


def test_decision_delay():
    m = run(_single(), load_topology("contention"), "perflow", SimulatorConfig(decision_delay=0.5)).metrics
    assert m.avg_cct == pytest.approx(4.5, rel=1e-6)


def test_bandwidth_change_mid_run():
    event = {"t": 2.0, "kind": "bandwidth_change", "src": "A", "dst": "B", "gbps": 5}
    result = run(_single(10, [event]), load_topology("contention"), "perflow")
    assert result.metrics.avg_cct == pytest.approx(14.0, rel=1e-6)
    assert any(r["kind"] == "bandwidth_change" for r in result.trace.records)


@pytest.mark.parametrize("order", ["fair", "fifo"])
def test_intra_group_order_does_not_change_cct(order):
    scenario = flowgroup()
    m = run(scenario.workload, scenario.topology, "terra", SimulatorConfig(intra_group=order),
            scheduler_cfg=scenario.scheduler).metrics
    assert m.avg_cct == pytest.approx(8.0, rel=1e-6)


def _chain(deadline=None):
    first = {"id": "j0-c0", "deps": [], "flows": [{"id": "f", "src": "A", "dst": "B", "bytes": 5 * GB}]}
    if deadline is not None:
        first["deadline_s"] = deadline
    second = {"id": "j0-c1", "deps": ["j0-c0"], "flows": [{"id": "f", "src": "B", "dst": "C", "bytes": 5 * GB}]}
    return load({"name": "chain", "compute_delay_s": 1.0,
                 "jobs": [{"id": "j0", "arrival_s": 0.0, "coflows": [first, second]}]})


def test_dag_release_and_jct():
    result = run(_chain(), load_topology("contention"), "perflow")
    outcomes = result.trace.outcomes
    assert outcomes["j0-c1"].arrival == pytest.approx(5.0)
    assert result.metrics.avg_cct == pytest.approx(4.0, rel=1e-6)
    assert result.metrics.avg_jct == pytest.approx(9.0, rel=1e-6)


def test_rejected_coflow_releases_successors():
    result = run(_chain(deadline=0.01), load_topology("contention"), "terra", scheduler_cfg=EXACT)
    outcomes = result.trace.outcomes
    assert outcomes["j0-c0"].rejected
    assert outcomes["j0-c0"].finish is None
    assert outcomes["j0-c1"].finish is not None
    assert result.metrics.rejected_fraction == pytest.approx(1.0)
    assert any(r["kind"] == "reject" for r in result.trace.records)


def test_admitted_deadline_is_met():
    result = run(_chain(deadline=20.0), load_topology("contention"), "terra", scheduler_cfg=SchedulerConfig())
    assert result.trace.outcomes["j0-c0"].admitted
    assert result.metrics.deadline_met == pytest.approx(1.0)
    assert result.metrics.admitted_met == pytest.approx(1.0)


def test_trace_records_are_digested():
    result = run(_single(), load_topology("contention"), "terra", scheduler_cfg=EXACT)
    kinds = [r["kind"] for r in result.trace.records]
    assert kinds[0] == "arrival"
    assert kinds[-1] == "coflow_finished"
    assert all(len(r["rates_snapshot_digest"]) == 16 for r in result.trace.records)


def test_deterministic_runs():
    first = run(_chain(), load_topology("contention"), "terra", scheduler_cfg=EXACT)
    second = run(_chain(), load_topology("contention"), "terra", scheduler_cfg=EXACT)
    assert first.trace.records == second.trace.records
    assert first.metrics == second.metrics


def test_metrics_csv(tmp_path):
    rows = [Metrics(policy="terra", workload="w", seed=3, coflows=2, finished=2, avg_cct=1 / 3, utilization=0.25),
            Metrics(policy="perflow", workload="w", seed=3, coflows=2, finished=1, avg_cct=2.0)]
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, rows)
    assert read_metrics_csv(path) == rows


class GreedyPolicy(BasePolicy):
    """Asks for three times the A->B capacity."""
    policy_name: ClassVar[str] = "greedy"

    def allocate(self, now: float) -> RateAssignment:
        self.rounds += 1
        return RateAssignment(flow_paths={(cid, f.flow_id): [(("A", "B"), 30 * GBPS)]
                                          for cid, c in self.coflows.items() for f in c.flows.values()})


def test_overloaded_assignment_is_counted_then_clipped():
    m = run(_single(), load_topology("contention"), GreedyPolicy()).metrics
    assert m.capacity_violations >= 1
    # clipped to the 10 Gbps link
    assert m.avg_cct == pytest.approx(4.0, rel=1e-6)
    assert m.conservation_error < 1e-6


def test_unchecked_overload_is_still_clipped():
    m = run(_single(), load_topology("contention"), GreedyPolicy(), SimulatorConfig(check_invariants=False)).metrics
    assert m.capacity_violations == 0
    assert m.avg_cct == pytest.approx(4.0, rel=1e-6)


def test_small_bandwidth_drop_stays_within_capacity():
    event = {"t": 0.5, "kind": "bandwidth_change", "src": "A", "dst": "B", "gbps": 9}
    m = run(_single(5, [event]), load_topology("contention"), "terra", scheduler_cfg=EXACT).metrics
    assert m.capacity_violations == 0
    # 1.25 GB by 0.5 s, the remaining 3.75 GB at 9 + 10 Gbps
    assert m.avg_cct == pytest.approx(0.5 + 3.75 / 2.375, rel=1e-6)


def test_rounds_are_logged_with_arc_loads(monkeypatch):
    policy = GreedyPolicy()
    lines = []
    monkeypatch.setattr(policy.logger, "enabled", lambda level: True)
    monkeypatch.setattr(policy.logger, "round", lines.append)
    run(_single(), load_topology("contention"), policy)
    assert lines
    assert "A->B" in lines[0]
    assert RateAssignment(flow_paths={("c", "f"): [(("A", "C", "B"), 2.0)]},
                          group_paths={("d", "A", "B"): [(("A", "B"), 1.0), (("A", "C", "B"), 1.0)]}).arc_loads() == \
        {("A", "B"): 1.0, ("A", "C"): 3.0, ("C", "B"): 3.0}
