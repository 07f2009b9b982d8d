"""Undirected character networks weighted by dialogue interaction and polarity."""
from __future__ import annotations

import colorsys
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import networkx as nx

from credi.corpus.types import Dimension, RelationInstance, RelationLabel
from credi.errors import MissingPolarity, ZeroInteractions

logger = logging.getLogger(__name__)

PROTAGONIST = "protagonist"
ANTAGONIST = "antagonist"
UNASSIGNED = "unassigned"
ROLES = (PROTAGONIST, ANTAGONIST, UNASSIGNED)
ROLE_FILL = {PROTAGONIST: "#87CEFA", ANTAGONIST: "#D3D3D3", UNASSIGNED: "#FFFFFF"}
NETWORK_SCHEMA = "credi-network/1"
_POLARITIES = ("positive", "neutral", "negative")


@dataclass(frozen=True)
class PairStats:
    pair: tuple[str, str]  # lexicographically ordered
    interactions: int
    polarity_counts: dict[str, int]
    # keyed by "subject->object"
    directed_breakdown: dict[str, dict[str, int]]


def _polarity_of(inst, source: str) -> RelationLabel:
    labels = inst.predicted if source == "predicted" else inst.gold
    if labels is None or Dimension.POLARITY not in labels:
        raise MissingPolarity(inst.id)
    return labels[Dimension.POLARITY]


def aggregate_pairs(instances: Iterable[RelationInstance], source: str = "gold") -> list[PairStats]:
    """Fold directed instances into unordered pairs with polarity counts.

    ``source`` picks the ``gold`` or ``predicted`` label map.
    """
    buckets: dict[tuple[str, str], dict[str, dict[str, int]]] = {}
    for inst in instances:
        pol = _polarity_of(inst, source).value
        pair = tuple(sorted((inst.subject, inst.object)))
        directed = buckets.setdefault(pair, {})
        key = f"{inst.subject}->{inst.object}"
        counts = directed.setdefault(key, {p: 0 for p in _POLARITIES})
        counts[pol] += 1
    out = []
    for pair in sorted(buckets):
        directed = {k: buckets[pair][k] for k in sorted(buckets[pair])}
        totals = {p: sum(c[p] for c in directed.values()) for p in _POLARITIES}
        out.append(PairStats(pair, sum(totals.values()), totals, directed))
    return out


def polarity_score(stats: PairStats) -> float:
    """Signed friendliness in [-1, 1]: (positive - negative) / interactions."""
    if stats.interactions < 1:
        raise ZeroInteractions(f"pair {stats.pair} has no interactions")
    c = stats.polarity_counts
    return (c["positive"] - c["negative"]) / stats.interactions


def node_size(quote_count: int) -> float:
    """Log-damped quotation frequency, ``1 + ln(1 + count)``."""
    if quote_count < 0:
        raise ValueError("quote_count must be >= 0")
    return 1.0 + math.log1p(quote_count)


def edge_color(score: float) -> str:
    """Map -1..1 onto the HSV hue sweep red (0 deg) -> green (120 deg)."""
    if not -1.0 <= score <= 1.0 or math.isnan(score):
        logger.warning("polarity score %r outside [-1, 1]; clamping", score)
        score = 0.0 if math.isnan(score) else min(1.0, max(-1.0, score))
    hue = (score + 1.0) / 2.0 * 120.0
    r, g, b = colorsys.hsv_to_rgb(hue / 360.0, 1.0, 1.0)
    return "#{:02X}{:02X}{:02X}".format(*(round(v * 255) for v in (r, g, b)))


@dataclass(frozen=True)
class Node:
    name: str
    quote_count: int
    size: float
    role: str = UNASSIGNED


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    weight: int
    polarity_score: float
    color: str
    polarity_counts: dict[str, int] = field(default_factory=dict)
    directed_breakdown: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def pair(self) -> tuple[str, str]:
        return (self.source, self.target)


@dataclass(frozen=True)
class CharacterNetwork:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        names = {n.name for n in self.nodes}
        for e in self.edges:
            if e.source not in names or e.target not in names:
                raise ValueError(f"edge {e.pair} has an endpoint outside the node set")
            if not -1.0 <= e.polarity_score <= 1.0:
                raise ValueError(f"edge {e.pair} score out of bounds")
        for n in self.nodes:
            if n.size <= 0:
                raise ValueError(f"node {n.name!r} has non-positive size")

    def node(self, name: str) -> Node:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def edge(self, a: str, b: str) -> Edge:
        pair = tuple(sorted((a, b)))
        for e in self.edges:
            if e.pair == pair:
                return e
        raise KeyError(pair)

    def to_dict(self) -> dict:
        return {
            "schema": NETWORK_SCHEMA,
            "nodes": [asdict(n) for n in self.nodes],
            "edges": [asdict(e) for e in self.edges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CharacterNetwork":
        if data.get("schema") != NETWORK_SCHEMA:
            raise ValueError(f"unsupported network schema {data.get('schema')!r}")
        return cls(tuple(Node(**n) for n in data["nodes"]), tuple(Edge(**e) for e in data["edges"]))

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        for n in self.nodes:
            g.add_node(n.name, size=n.size, role=n.role, quote_count=n.quote_count)
        for e in self.edges:
            g.add_edge(e.source, e.target, weight=e.weight, polarity_score=e.polarity_score, color=e.color)
        return g


def build_network(pairs: Iterable[PairStats] | Iterable[RelationInstance],
                  quote_counts: Mapping[str, int] | None = None,
                  roles: Mapping[str, str] | None = None,
                  extra_nodes: Iterable[str] = (), source: str = "gold") -> CharacterNetwork:
    """Assemble a network from pair statistics (or raw instances, aggregated here).

    Characters missing from ``quote_counts`` get count 0; roles default to
    unassigned.
    """
    pairs = list(pairs)
    if pairs and isinstance(pairs[0], RelationInstance):
        pairs = aggregate_pairs(pairs, source)
    quote_counts = quote_counts or {}
    roles = roles or {}
    for name, role in roles.items():
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r} for {name!r}")
    names = set(extra_nodes)
    for ps in pairs:
        names.update(ps.pair)
    nodes = tuple(
        Node(name, int(quote_counts.get(name, 0)), node_size(int(quote_counts.get(name, 0))),
             roles.get(name, UNASSIGNED))
        for name in sorted(names)
    )
    edges = []
    for ps in pairs:
        score = polarity_score(ps)
        edges.append(Edge(ps.pair[0], ps.pair[1], ps.interactions, score, edge_color(score),
                          dict(ps.polarity_counts), {k: dict(v) for k, v in ps.directed_breakdown.items()}))
    return CharacterNetwork(nodes, tuple(edges))


def _dot_id(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(net: CharacterNetwork, min_pen: float = 1.0, max_pen: float = 8.0) -> str:
    """Graphviz text; pen width scales linearly with interaction count."""
    max_w = max((e.weight for e in net.edges), default=1)
    lines = ["graph characters {", "  node [shape=circle];"]
    for n in net.nodes:
        lines.append(f"  {_dot_id(n.name)} [width={n.size:.4f}, style=filled, "
                     f'fillcolor="{ROLE_FILL[n.role]}", role={_dot_id(n.role)}, quote_count={n.quote_count}];')
    for e in net.edges:
        pen = min_pen + (max_pen - min_pen) * e.weight / max_w
        lines.append(f"  {_dot_id(e.source)} -- {_dot_id(e.target)} [penwidth={pen:.3f}, "
                     f'color="{e.color}", weight={e.weight}, polarity_score={e.polarity_score:.6f}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_network(net: CharacterNetwork, fmt: str, path: str | Path) -> Path:
    """Write ``net`` as ``graphml``, ``dot`` or ``json``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = fmt.lower()
    if fmt == "graphml":
        nx.write_graphml(net.to_networkx(), path, encoding="utf-8", prettyprint=True)
    elif fmt == "dot":
        path.write_text(to_dot(net), encoding="utf-8")
    elif fmt == "json":
        path.write_text(json.dumps(net.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown network format {fmt!r}")
    return path


def load_network_json(path: str | Path) -> CharacterNetwork:
    return CharacterNetwork.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_roles(path: str | Path) -> dict[str, str]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError("role file must be a JSON object {name: role}")
    return {str(k): str(v).lower() for k, v in data.items()}
