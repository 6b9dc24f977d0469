#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/02 15:02
@File    : wan_topology.py

Inter-datacenter WAN graph, its events and candidate paths.

Capacities are bytes/s. Each ordered datacenter pair carries at most one
logical link; parallel links are merged at load time by summing capacity.
Graphs are treated as values: every mutating operation returns a new graph.
"""
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import networkx as nx

from utils.errors import TopologyError
from utils.log import Logger
from utils.utils import StrEnum, Utils

logger = Logger('WanTopology')

Arc = Tuple[str, str]
NodePath = Tuple[str, ...]

GBPS = 1e9 / 8.0
EPSILON = 1e-9
RESIDUE_TOL = 1e-6
DEFAULT_LATENCY_MS = 1.0
BUILTIN_DIRECTORY = Path(__file__).parent.parent / "config" / "topology"


@dataclass(frozen=True)
class Link:
    src: str
    dst: str
    capacity: float
    latency_ns: int
    up: bool = True

    @property
    def arc(self) -> Arc:
        return self.src, self.dst

    @property
    def latency(self) -> float:
        return self.latency_ns * 1e-9

    @property
    def effective(self) -> float:
        return self.capacity if self.up else 0.0


class WanEventKind(StrEnum):
    LINK_FAIL = "link_fail"
    LINK_RECOVER = "link_recover"
    BANDWIDTH_CHANGE = "bandwidth_change"


@dataclass(frozen=True, order=True)
class WanEvent:
    time: float
    seq: int = 0
    kind: WanEventKind = field(default=WanEventKind.LINK_FAIL, compare=False)
    link: Arc = field(default=("", ""), compare=False)
    new_capacity: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == WanEventKind.BANDWIDTH_CHANGE and (self.new_capacity is None or self.new_capacity < 0):
            raise TopologyError(f"bandwidth change on {self.link} needs new_capacity >= 0, got {self.new_capacity}")

    @classmethod
    def from_document(cls, doc: Mapping, seq: int = 0) -> "WanEvent":
        try:
            kind = WanEventKind(doc["kind"])
            new_capacity = float(doc["gbps"]) * GBPS if kind == WanEventKind.BANDWIDTH_CHANGE else None
            return cls(float(doc["t"]), seq, kind, (str(doc["src"]), str(doc["dst"])), new_capacity)
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, TopologyError):
                raise
            raise TopologyError(f"malformed wan event {doc}: {e}") from e

    def to_document(self) -> Dict:
        doc = {"t": self.time, "kind": self.kind.value, "src": self.link[0], "dst": self.link[1]}
        if self.kind == WanEventKind.BANDWIDTH_CHANGE:
            doc["gbps"] = self.new_capacity / GBPS
        return doc


class WanGraph:
    """Directed datacenter graph; one logical link per ordered pair."""

    def __init__(self, nodes: Iterable[str], links: Iterable[Link]):
        self.nodes: Tuple[str, ...] = tuple(sorted(set(nodes)))
        node_set = set(self.nodes)
        merged: Dict[Arc, Link] = {}
        for link in links:
            if link.src == link.dst:
                raise TopologyError(f"self-loop on {link.src}")
            if link.src not in node_set or link.dst not in node_set:
                raise TopologyError(f"link {link.src}->{link.dst} references an unknown node")
            if link.capacity < 0:
                raise TopologyError(f"negative capacity on {link.src}->{link.dst}")
            if link.arc in merged:
                old = merged[link.arc]
                link = replace(old, capacity=old.capacity + link.capacity, latency_ns=min(old.latency_ns, link.latency_ns))
            merged[link.arc] = link
        self.links: Dict[Arc, Link] = {arc: merged[arc] for arc in sorted(merged)}
        self._digraph: Optional[nx.DiGraph] = None

    def __repr__(self) -> str:
        return f"WanGraph(nodes={len(self.nodes)}, links={len(self.links)})"

    def __eq__(self, other) -> bool:
        return isinstance(other, WanGraph) and self.nodes == other.nodes and self.links == other.links

    def arcs(self) -> List[Arc]:
        return list(self.links)

    def up_arcs(self) -> List[Arc]:
        return [arc for arc, link in self.links.items() if link.up]

    def link(self, arc: Arc) -> Link:
        try:
            return self.links[tuple(arc)]
        except KeyError:
            raise TopologyError(f"unknown link {arc[0]}->{arc[1]}") from None

    def capacity(self, arc: Arc) -> float:
        link = self.links.get(arc)
        return link.effective if link is not None else 0.0

    def capacities(self) -> Dict[Arc, float]:
        return {arc: link.effective for arc, link in self.links.items()}

    def max_capacity(self) -> float:
        return max((link.effective for link in self.links.values()), default=0.0)

    def total_capacity(self) -> float:
        return sum(link.effective for link in self.links.values())

    def digraph(self) -> nx.DiGraph:
        """Up links only, weighted by latency in ns. Shared; callers must not mutate it."""
        if self._digraph is None:
            digraph = nx.DiGraph()
            digraph.add_nodes_from(self.nodes)
            digraph.add_weighted_edges_from((u, v, link.latency_ns) for (u, v), link in self.links.items() if link.up)
            self._digraph = digraph
        return self._digraph

    def scaled(self, factor: float) -> "WanGraph":
        if factor < 0:
            raise TopologyError(f"negative scale factor {factor}")
        return WanGraph(self.nodes, [replace(link, capacity=link.capacity * factor) for link in self.links.values()])

    def subtract(self, rates: Mapping[Arc, float], clamp: bool = False) -> "WanGraph":
        """Residual graph after ``rates`` are carved out.

        Without ``clamp`` a residual below -epsilon (relative) raises; residues within
        ``RESIDUE_TOL`` of the capacity are rounded to zero.
        """
        links = dict(self.links)
        for arc, rate in rates.items():
            if rate == 0:
                continue
            link = self.link(arc)
            left = link.capacity - rate
            if left < -EPSILON * max(link.capacity, rate, 1.0) and not clamp:
                raise TopologyError(f"residual of {arc[0]}->{arc[1]} would drop to {left:.6g}")
            links[arc] = replace(link, capacity=left if left > RESIDUE_TOL * link.capacity else 0.0)
        return WanGraph(self.nodes, links.values())

    def to_document(self) -> Dict:
        return {
            "nodes": list(self.nodes),
            "links": [{"src": l.src, "dst": l.dst, "gbps": l.capacity / GBPS, "latency_ms": l.latency_ns / 1e6}
                      for l in self.links.values()],
        }


def load_topology(spec: Union[Mapping, str, Path]) -> WanGraph:
    """Build a graph from a topology document, a JSON path or a builtin name."""
    if isinstance(spec, (str, Path)):
        path = Path(spec)
        if not path.exists() and (BUILTIN_DIRECTORY / f"{spec}.json").exists():
            path = BUILTIN_DIRECTORY / f"{spec}.json"
        try:
            spec = Utils().read_json(path)
        except (OSError, json.JSONDecodeError) as e:
            raise TopologyError(f"cannot read topology {path}: {e}") from e
    if not isinstance(spec, Mapping) or not isinstance(spec.get("nodes"), list) or not isinstance(spec.get("links"), list):
        raise TopologyError("topology document needs a 'nodes' list and a 'links' list")
    nodes = [str(n) for n in spec["nodes"]]
    if len(set(nodes)) != len(nodes):
        raise TopologyError("duplicate node in topology document")
    links: List[Link] = []
    for doc in spec["links"]:
        try:
            src, dst = str(doc["src"]), str(doc["dst"])
            gbps = float(doc["gbps"])
            latency_ms = float(doc.get("latency_ms", DEFAULT_LATENCY_MS))
            bidirectional = bool(doc.get("bidirectional", False))
        except (KeyError, TypeError, ValueError) as e:
            raise TopologyError(f"malformed link {doc}: {e}") from e
        if gbps < 0:
            raise TopologyError(f"negative capacity on {src}->{dst}")
        if latency_ms < 0:
            raise TopologyError(f"negative latency on {src}->{dst}")
        latency_ns = int(round(latency_ms * 1e6))
        links.append(Link(src, dst, gbps * GBPS, latency_ns))
        if bidirectional:
            links.append(Link(dst, src, gbps * GBPS, latency_ns))
    graph = WanGraph(nodes, links)
    logger.debug(f"loaded topology with {len(graph.nodes)} nodes and {len(graph.links)} directed links")
    return graph


def apply_event(g: WanGraph, e: WanEvent) -> WanGraph:
    link = g.link(e.link)
    if e.kind == WanEventKind.LINK_FAIL:
        changed = replace(link, up=False)
    elif e.kind == WanEventKind.LINK_RECOVER:
        changed = replace(link, up=True)
    else:
        changed = replace(link, capacity=float(e.new_capacity))
    links = dict(g.links)
    links[link.arc] = changed
    return WanGraph(g.nodes, links.values())


def significant_change(old_cap: float, new_cap: float, rho: float) -> bool:
    if old_cap <= 0:
        raise ValueError(f"old capacity must be positive, got {old_cap}")
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if new_cap <= 0:
        return True
    return abs(new_cap - old_cap) / old_cap >= rho


def _path_key(g: nx.DiGraph, path: NodePath) -> Tuple[int, int, NodePath]:
    distance = sum(g[path[i]][path[i + 1]]["weight"] for i in range(len(path) - 1))
    return distance, len(path) - 1, path


def k_shortest_paths(g: WanGraph, u: str, v: str, k: int) -> List[NodePath]:
    """Loop-free k shortest paths over up links.

    Paths are ordered by (latency sum, hops, node sequence); the list for k is
    a prefix of the list for k+1. Every path tied with the k-th one on latency
    is drawn before sorting so the cut does not depend on networkx's tie order.
    """
    if u == v:
        raise TopologyError(f"path endpoints must differ, got {u}")
    if k < 1:
        raise TopologyError(f"k must be >= 1, got {k}")
    for node in (u, v):
        if node not in g.nodes:
            raise TopologyError(f"unknown node {node}")
    digraph = g.digraph()
    if not nx.has_path(digraph, u, v):
        return []
    keyed: List[Tuple[int, int, NodePath]] = []
    for path in nx.shortest_simple_paths(digraph, u, v, weight="weight"):
        key = _path_key(digraph, tuple(path))
        if len(keyed) >= k and key[0] > keyed[k - 1][0]:
            break
        keyed.append(key)
    return [path for _, _, path in sorted(keyed)[:k]]


def path_arcs(path: NodePath) -> List[Arc]:
    return [(path[i], path[i + 1]) for i in range(len(path) - 1)]
