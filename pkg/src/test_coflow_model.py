#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/08 14:40
@File    : test_coflow_model.py
"""
import pytest

from src.coflow_model import Coflow, CoflowState, Flow, FlowGroup, group_flows, update_coflow
from utils.errors import CoflowError


def _flows():
    return [Flow("f3", "C", "A", 100), Flow("f1", "B", "A", 10), Flow("f2", "B", "A", 20)]


def test_group_flows_coalesces_by_pair():
    groups = group_flows(_flows(), "c1")
    assert [g.pair for g in groups] == [("B", "A"), ("C", "A")]
    assert [f.flow_id for f in groups[0].flows] == ["f1", "f2"]
    assert groups[0].volume == 30
    assert groups[0].key == ("c1", "B", "A")


def test_group_flows_needs_flows():
    with pytest.raises(CoflowError):
        group_flows([], "c1")


@pytest.mark.parametrize("args", [("f", "A", "A", 1), ("f", "A", "B", -5), ("f", "A", "B", 0), ("f", "A", "B", 1.5)])
def test_invalid_flows(args):
    with pytest.raises(CoflowError):
        Flow(*args)


def test_duplicate_flow_id():
    with pytest.raises(CoflowError):
        Coflow.create("c", [Flow("f", "A", "B", 1), Flow("f", "A", "C", 1)])


def test_nonpositive_deadline():
    with pytest.raises(CoflowError):
        Coflow.create("c", [Flow("f", "A", "B", 1)], deadline=0.0)


def test_coflow_progress():
    c = Coflow.create("c", _flows(), arrival=2.0, deadline=8.0)
    assert c.total_bytes == 130
    assert c.absolute_deadline == pytest.approx(10.0)
    assert not c.finished
    for f in c.flows.values():
        if f.src == "B":
            f.remaining = 0.0
    assert [g.pair for g in c.remaining_groups()] == [("C", "A")]
    assert c.remaining_bytes == pytest.approx(100)
    c.flows["f3"].remaining = 1e-12
    assert c.finished


def test_document_round_trip():
    doc = {"id": "c", "deps": ["b"], "flows": [{"id": "f1", "src": "A", "dst": "B", "bytes": 7}], "deadline_s": 3.0}
    c = Coflow.from_document(doc, arrival=1.0, job_id="j")
    assert c.deps == ("b",)
    assert c.job_id == "j"
    assert c.to_document() == doc
    with pytest.raises(CoflowError):
        Coflow.from_document({"id": "c"})


def test_update_adds_flows():
    c = Coflow.create("c", [Flow("f1", "B", "A", 10)])
    update_coflow(c, [Flow("f2", "B", "A", 5), Flow("f3", "C", "A", 5)])
    assert c.groups[("B", "A")].volume == 15
    assert c.groups[("C", "A")].volume == 5
    with pytest.raises(CoflowError):
        update_coflow(c, [Flow("f1", "B", "A", 1)])
    c.state = CoflowState.FINISHED
    with pytest.raises(CoflowError):
        update_coflow(c, [Flow("f9", "B", "A", 1)])


def test_bypass_threshold():
    c = Coflow.create("c", [Flow("f1", "B", "A", 10)])
    assert not c.bypasses(0)
    assert c.bypasses(11)
    assert not c.bypasses(10)


def test_single_flow_group():
    g = FlowGroup.of("c", "A", "B", 42)
    assert g.remaining == 42
    assert g.active_flows()[0].pair == ("A", "B")
