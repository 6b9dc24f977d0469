#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/07 10:20
@File    : workload.py

Synthetic workload generation and workload document loading.

A job is a chain of coflow stages; every coflow of a stage depends on all
coflows of the previous stage and is submitted once they finish (plus an
optional compute delay). Sources of a job's flows are confined to a random
subset of ``spread`` datacenters.
"""
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Union

import numpy as np
from pydantic import Field, model_validator

from src.coflow_model import Coflow, Flow
from src.optimizer import CoflowOptimizer
from src.wan_topology import GBPS, WanEvent, WanEventKind, WanGraph
from utils.errors import CoflowError, TopologyError, WorkloadError
from utils.log import Logger
from utils.utils import Utils
from utils.yaml_model import YamlModel

logger = Logger('Workload')

GBPS_QUANTUM = 1024


class WorkloadSpec(YamlModel):
    name: str = "synthetic"
    jobs: int = Field(10, ge=0)
    arrival: Literal["poisson", "explicit"] = "poisson"
    rate: float = Field(0.1, gt=0.0, description="job arrivals per second")
    times: Optional[List[float]] = None
    volume_dist: Literal["uniform", "lognormal", "pareto"] = "pareto"
    volume_bytes: float = Field(1e8, gt=0.0, description="scale of coflow sizes")
    lognormal_sigma: float = Field(1.0, gt=0.0)
    pareto_shape: float = Field(0.6, gt=0.0)
    pareto_max_ratio: float = Field(1e5, gt=1.0)
    mappers: int = Field(4, ge=1)
    reducers: int = Field(2, ge=1)
    spread: Optional[int] = Field(None, ge=1)
    dag_min: int = Field(1, ge=1, le=6)
    dag_max: int = Field(1, ge=1, le=6)
    fan_out: int = Field(1, ge=1)
    deadline_d: Optional[float] = Field(None, gt=0.0)
    compute_delay: float = Field(0.0, ge=0.0)
    rate_multiplier: float = Field(1.0, gt=0.0)
    volume_multiplier: float = Field(1.0, gt=0.0)
    fluctuation_interval: Optional[float] = Field(None, gt=0.0)
    fluctuation_magnitude: float = Field(0.2, ge=0.0, lt=1.0)
    seed: int = 0

    @model_validator(mode="after")
    def check_shape(self):
        if self.dag_min > self.dag_max:
            raise ValueError(f"dag_min {self.dag_min} exceeds dag_max {self.dag_max}")
        if self.arrival == "explicit" and (self.times is None or len(self.times) != self.jobs):
            raise ValueError("explicit arrivals need one time per job")
        return self


@dataclass
class Job:
    job_id: str
    arrival: float
    coflows: List[Coflow] = field(default_factory=list)

    def to_document(self) -> Dict:
        return {"id": self.job_id, "arrival_s": self.arrival, "coflows": [c.to_document() for c in self.coflows]}


@dataclass
class Workload:
    jobs: List[Job] = field(default_factory=list)
    wan_events: List[WanEvent] = field(default_factory=list)
    compute_delay: float = 0.0
    name: str = "workload"
    metadata: Dict = field(default_factory=dict)

    def instantiate(self) -> List[Job]:
        """Fresh coflow objects, so one workload can feed many runs."""
        return [Job(job.job_id, job.arrival,
                    [Coflow.from_document(c.to_document(), arrival=job.arrival, job_id=job.job_id)
                     for c in job.coflows]) for job in self.jobs]

    def coflows(self) -> List[Coflow]:
        return [c for job in self.jobs for c in job.coflows]

    def to_document(self) -> Dict:
        return {
            "name": self.name,
            "metadata": self.metadata,
            "compute_delay_s": self.compute_delay,
            "jobs": [job.to_document() for job in self.jobs],
            "wan_events": [e.to_document() for e in self.wan_events],
        }


def _check_dag(job: Job):
    ids = {c.coflow_id for c in job.coflows}
    indegree = {c.coflow_id: len(c.deps) for c in job.coflows}
    children: Dict[str, List[str]] = {}
    for c in job.coflows:
        for dep in c.deps:
            if dep not in ids:
                raise WorkloadError(f"job {job.job_id}: coflow {c.coflow_id} depends on unknown coflow {dep}")
            children.setdefault(dep, []).append(c.coflow_id)
    queue = deque(cid for cid, n in indegree.items() if n == 0)
    seen = 0
    while queue:
        cid = queue.popleft()
        seen += 1
        for child in children.get(cid, ()):
            indegree[child] -= 1
            if indegree[child] == 0:
                queue.append(child)
    if seen != len(ids):
        raise WorkloadError(f"job {job.job_id}: cyclic coflow dependencies")


def load(doc: Union[Mapping, str, Path]) -> Workload:
    """Parse a workload document (``jobs`` form, or a flat ``coflows`` list)."""
    if isinstance(doc, (str, Path)):
        try:
            doc = Utils().read_json(doc)
        except (OSError, json.JSONDecodeError) as e:
            raise WorkloadError(f"cannot read workload {doc}: {e}") from e
    if not isinstance(doc, Mapping):
        raise WorkloadError("workload document must be an object")
    try:
        if "jobs" in doc:
            jobs = []
            for jd in doc["jobs"]:
                job_id = str(jd["id"])
                arrival = float(jd["arrival_s"])
                jobs.append(Job(job_id, arrival, [Coflow.from_document(cd, arrival=arrival, job_id=job_id)
                                                  for cd in jd["coflows"]]))
        elif "coflows" in doc:
            jobs = []
            for cd in doc["coflows"]:
                c = Coflow.from_document(cd, job_id=str(cd["id"]))
                if c.deps:
                    raise WorkloadError(f"coflow {c.coflow_id}: dependencies need the jobs form")
                jobs.append(Job(c.coflow_id, c.arrival, [c]))
        else:
            raise WorkloadError("workload document needs 'jobs' or 'coflows'")
        events = [WanEvent.from_document(ed, seq) for seq, ed in enumerate(doc.get("wan_events", []))]
    except (CoflowError, TopologyError) as e:
        raise WorkloadError(str(e)) from e
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, WorkloadError):
            raise
        raise WorkloadError(f"malformed workload document: {e}") from e

    seen = set()
    for job in jobs:
        for c in job.coflows:
            if c.coflow_id in seen:
                raise WorkloadError(f"duplicate coflow id {c.coflow_id}")
            seen.add(c.coflow_id)
        _check_dag(job)
    jobs.sort(key=lambda j: (j.arrival, j.job_id))
    return Workload(jobs, sorted(events), float(doc.get("compute_delay_s", 0.0)),
                    str(doc.get("name", "workload")), dict(doc.get("metadata", {})))


def _volume(spec: WorkloadSpec, rng: np.random.Generator) -> float:
    if spec.volume_dist == "uniform":
        x = rng.uniform(0.5, 1.5)
    elif spec.volume_dist == "lognormal":
        sigma = spec.lognormal_sigma
        x = rng.lognormal(-sigma * sigma / 2.0, sigma)
    else:
        # bounded Pareto on [1, max_ratio] by inverse transform
        a, high = spec.pareto_shape, spec.pareto_max_ratio
        u = rng.uniform()
        x = (1.0 - u * (1.0 - high ** -a)) ** (-1.0 / a)
    return spec.volume_bytes * spec.volume_multiplier * x


def assign_deadlines(jobs: List[Job], topology: WanGraph, d: float, optimizer: Optional[CoflowOptimizer] = None):
    """Deadline = d times the coflow's completion time alone on the unscaled WAN."""
    optimizer = optimizer or CoflowOptimizer()
    for job in jobs:
        for c in job.coflows:
            alloc = optimizer.min_cct(c.group_list(), topology)
            c.deadline = None if alloc is None else d * alloc.gamma


def _fluctuations(spec: WorkloadSpec, topology: WanGraph, horizon: float, rng: np.random.Generator) -> List[WanEvent]:
    arcs = topology.up_arcs()
    events: List[WanEvent] = []
    t = rng.exponential(spec.fluctuation_interval)
    while arcs and t <= horizon:
        arc = arcs[int(rng.integers(len(arcs)))]
        base = topology.links[arc].capacity / GBPS
        gbps = base * (1.0 + rng.uniform(-spec.fluctuation_magnitude, spec.fluctuation_magnitude))
        gbps = round(gbps * GBPS_QUANTUM) / GBPS_QUANTUM
        events.append(WanEvent(float(t), len(events), WanEventKind.BANDWIDTH_CHANGE, arc, gbps * GBPS))
        t += rng.exponential(spec.fluctuation_interval)
    return events


def generate(spec: WorkloadSpec, topology: WanGraph) -> Dict:
    """Workload document; a pure function of (spec, topology)."""
    nodes = list(topology.nodes)
    n = len(nodes)
    spread = spec.spread if spec.spread is not None else math.ceil(n / 2) + 1
    if spread > n:
        raise WorkloadError(f"spread {spread} exceeds the {n} datacenters of the topology")
    if n < 2:
        raise WorkloadError("a workload needs at least two datacenters")
    rng = np.random.default_rng(spec.seed)

    if spec.arrival == "explicit":
        arrivals = sorted(float(t) for t in spec.times)
    else:
        gaps = rng.exponential(1.0 / (spec.rate * spec.rate_multiplier), size=spec.jobs)
        arrivals = [float(t) for t in np.cumsum(gaps)]

    jobs: List[Job] = []
    for j, arrival in enumerate(arrivals):
        job_id = f"j{j}"
        stages = int(rng.integers(spec.dag_min, spec.dag_max + 1))
        sources = sorted(int(i) for i in rng.choice(n, size=spread, replace=False))
        previous: List[str] = []
        job = Job(job_id, arrival)
        for s in range(stages):
            width = int(rng.integers(1, spec.fan_out + 1)) if s > 0 else 1
            stage: List[str] = []
            for w in range(width):
                coflow_id = f"{job_id}-c{s}" + (chr(ord("a") + w) if width > 1 else "")
                mappers = [nodes[sources[int(rng.integers(len(sources)))]]
                           for _ in range(int(rng.integers(1, spec.mappers + 1)))]
                reducers = [nodes[int(rng.integers(n))] for _ in range(int(rng.integers(1, spec.reducers + 1)))]
                pairs = [(a, b) for a in mappers for b in reducers if a != b]
                if not pairs:
                    others = [x for x in nodes if x != mappers[0]]
                    reducers[0] = others[int(rng.integers(len(others)))]
                    pairs = [(a, b) for a in mappers for b in reducers if a != b]
                per_flow = max(1, int(_volume(spec, rng) // len(pairs)))
                flows = [Flow(f"f{i}", a, b, per_flow) for i, (a, b) in enumerate(pairs)]
                job.coflows.append(Coflow.create(coflow_id, flows, arrival=arrival, deps=tuple(previous),
                                                 job_id=job_id))
                stage.append(coflow_id)
            previous = stage
        jobs.append(job)

    if spec.deadline_d is not None:
        assign_deadlines(jobs, topology, spec.deadline_d)
    events = _fluctuations(spec, topology, arrivals[-1] if arrivals else 0.0, rng) \
        if spec.fluctuation_interval is not None else []
    metadata = spec.model_dump(mode="json")
    metadata["spread_effective"] = spread
    if spec.volume_dist == "pareto":
        metadata["heavy_tail"] = {"family": "bounded_pareto", "shape": spec.pareto_shape,
                                  "max_ratio": spec.pareto_max_ratio}
    workload = Workload(jobs, events, spec.compute_delay, spec.name, metadata)
    logger.info(f"generated {len(jobs)} jobs / {len(workload.coflows())} coflows, {len(events)} wan events")
    return workload.to_document()
