#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/11 10:05
@File    : test_cli.py
"""
import csv

import pytest

from src.cli import build_parser, factor_of_improvement, main
from src.flowsim import Metrics, read_metrics_csv, write_metrics_csv
from utils.errors import ConfigError


def test_run_scenario(tmp_path):
    out = tmp_path / "contention"
    code = main(["run", "--scenario", "contention", "--policy", "perflow", "--policy", "terra", "--out", str(out)])
    assert code == 0
    rows = read_metrics_csv(out / "metrics.csv")
    assert [m.policy for m in rows] == ["terra", "perflow"]
    assert rows[0].avg_cct == pytest.approx(8.0, rel=1e-6)
    assert rows[1].avg_cct == pytest.approx(14.0, rel=1e-6)
    assert (out / "terra-seed0.trace.jsonl").exists()
    assert (out / "perflow-seed0.metrics.csv").exists()


def test_run_named_scenarios(tmp_path):
    out = tmp_path / "figure1"
    policies = ["perflow", "varys", "multipath", "terra"]
    assert main(["run", "--scenario", "figure1", *[a for p in policies for a in ("--policy", p)], "--out", str(out)]) == 0
    cct = {m.policy: m.avg_cct for m in read_metrics_csv(out / "metrics.csv")}
    assert cct["perflow"] == pytest.approx(14.0, rel=1e-6)
    assert cct["varys"] == pytest.approx(12.0, rel=1e-6)
    assert main(["run", "--scenario", "figure2", "--policy", "terra", "--out", str(tmp_path / "figure2")]) == 0
    assert main(["run", "--scenario", "flowgroup", "--policy", "terra", "--out", str(tmp_path / "flowgroup")]) == 0


def test_schedule_trace(tmp_path):
    out = tmp_path / "traced"
    assert main(["run", "--scenario", "contention", "--trace-schedule", "--out", str(out)]) == 0
    assert (out / "terra-seed0.schedule.jsonl").read_text(encoding="utf-8").strip()


def test_runs_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--scenario", "failover", "--policy", "terra", "--policy", "varys",
                     "--out", str(tmp_path / name)]) == 0
    for file in ("metrics.csv", "terra-seed0.trace.jsonl", "varys-seed0.trace.jsonl"):
        assert (tmp_path / "a" / file).read_bytes() == (tmp_path / "b" / file).read_bytes()


def test_unknown_policy_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(["run", "--scenario", "contention", "--policy", "fastest"])
    assert info.value.code == 2


def test_missing_input(tmp_path):
    assert main(["run", "--out", str(tmp_path / "none")]) == 1


def test_compare(tmp_path, capsys):
    rows = [Metrics(policy="terra", workload="w", seed=0, avg_cct=2.0, avg_jct=4.0, utilization=0.5),
            Metrics(policy="perflow", workload="w", seed=0, avg_cct=5.0, avg_jct=6.0, utilization=0.25)]
    write_metrics_csv(tmp_path / "metrics.csv", rows)
    assert main(["compare", str(tmp_path)]) == 0
    assert "perflow" in capsys.readouterr().out
    foi = factor_of_improvement(rows, "perflow")
    assert foi["avg_cct"] == pytest.approx(2.5)
    assert foi["avg_jct"] == pytest.approx(1.5)
    assert foi["utilization"] == pytest.approx(2.0)


def test_compare_without_terra(tmp_path):
    write_metrics_csv(tmp_path / "metrics.csv", [Metrics(policy="perflow", workload="w", avg_cct=1.0)])
    assert main(["compare", str(tmp_path / "metrics.csv")]) == 1
    with pytest.raises(ConfigError):
        factor_of_improvement(read_metrics_csv(tmp_path / "metrics.csv"), "perflow")
    assert main(["compare", str(tmp_path / "missing")]) == 1


def test_sweep_k(tmp_path):
    out = tmp_path / "k"
    assert main(["sweep", "k", "1", "3", "--scenario", "contention", "--out", str(out)]) == 0
    with open(out / "sweep_k.csv", encoding="utf-8") as file:
        rows = list(csv.DictReader(file))
    assert len(rows) == 4
    terra = {float(r["value"]): float(r["avg_cct"]) for r in rows if r["policy"] == "terra"}
    # one path per pair leaves C->A->B unused
    assert terra[3.0] == pytest.approx(8.0, rel=1e-6)
    assert terra[1.0] >= terra[3.0]


def test_sweep_rejects_workload_parameter_on_scenario(tmp_path):
    assert main(["sweep", "rate", "2", "--scenario", "contention", "--out", str(tmp_path / "r")]) == 1
