"""Shared domain types and the communication-graph algebra.

A :class:`CommunicationGraph` is a whitelist: a directed edge ``src -> dst``
means data may flow from ``src`` to ``dst``; anything without an edge is
denied.  Edges may carry a :class:`TopicKey` annotation that restricts the
flow to one publish/subscribe topic (and optionally one message type).  An
unannotated edge permits both middleware flows on every topic and raw OS
flows (sockets, pipes, files, ...).
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional

from .errors import UnknownNode

# distinguished graph endpoints
CAMERA = "CAMERA"
GPS = "GPS"
NETWORK = "NETWORK"
FILESYSTEM = "FILESYSTEM"
TAMPERLOG = "TAMPERLOG"

SENSORS = frozenset({CAMERA, GPS})
SINKS = frozenset({NETWORK, FILESYSTEM, TAMPERLOG})

INSTANCE_SEP = "@"


class NodeKind(enum.Enum):
    APP = "app"
    SENSOR = "sensor"
    SINK = "sink"


class Decision(enum.Enum):
    ALLOW = "ALLOW"
    DENY = "DENY"

    def __bool__(self):
        return self is Decision.ALLOW


ALLOW = Decision.ALLOW
DENY = Decision.DENY


class EnforcementMode(enum.Enum):
    NONE = "none"
    MANIFEST_ONLY = "manifest"
    FULL = "full"


class Abstraction(enum.Enum):
    LOCAL_STREAM = "local-stream"
    NETWORK_STREAM = "network-stream"
    DATAGRAM = "datagram"
    SHARED_MEMORY = "shared-memory"
    PIPE = "pipe"
    MESSAGE_QUEUE = "message-queue"
    FILE = "file"


def default_kind(node: str) -> NodeKind:
    if node in SENSORS:
        return NodeKind.SENSOR
    if node in SINKS:
        return NodeKind.SINK
    return NodeKind.APP


def app_name(node: str) -> str:
    """Application name of a node id (``BlurFilter@2`` -> ``BlurFilter``)."""
    return node.split(INSTANCE_SEP, 1)[0]


@dataclass(frozen=True)
class TopicKey:
    topic: str
    type_name: Optional[str] = None

    def matches(self, other: "TopicKey") -> bool:
        if self.topic != other.topic:
            return False
        if self.type_name is None or other.type_name is None:
            return True
        return self.type_name == other.type_name

    def __lt__(self, other: "TopicKey"):
        return (self.topic, self.type_name or "") < (other.topic, other.type_name or "")

    def __str__(self):
        if self.type_name is None:
            return self.topic
        return f"{self.topic}::{self.type_name}"

    @classmethod
    def parse(cls, text: str) -> "TopicKey":
        topic, sep, type_name = text.partition("::")
        return cls(topic, type_name if sep else None)


@dataclass(frozen=True)
class AppManifest:
    """Topics an application may publish or subscribe to; everything else is denied."""

    publishes: frozenset = frozenset()
    subscribes: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "publishes", frozenset(_topics(self.publishes)))
        object.__setattr__(self, "subscribes", frozenset(_topics(self.subscribes)))

    def may_publish(self, topic: str) -> bool:
        return any(k.topic == topic for k in self.publishes)

    def may_subscribe(self, topic: str) -> bool:
        return any(k.topic == topic for k in self.subscribes)

    def canonical(self) -> bytes:
        pubs = ",".join(sorted(str(k) for k in self.publishes))
        subs = ",".join(sorted(str(k) for k in self.subscribes))
        return f"pub={pubs};sub={subs}".encode()


def _topics(items) -> Iterable[TopicKey]:
    for item in items:
        yield item if isinstance(item, TopicKey) else TopicKey(item)


@dataclass(frozen=True)
class AppIdentity:
    """Certificate-backed binding of an application name to its binary digest."""

    name: str
    binary_digest: bytes
    manifest: AppManifest
    certificate: bytes = b""

    def signed_payload(self) -> bytes:
        return b"\x00".join(
            [b"app-identity-v1", self.name.encode(), self.binary_digest, self.manifest.canonical()]
        )


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    key: Optional[TopicKey] = None

    def sort_key(self):
        if self.key is None:
            return (self.src, self.dst, 0, "", "")
        return (self.src, self.dst, 1, self.key.topic, self.key.type_name or "")

    def __lt__(self, other: "Edge"):
        return self.sort_key() < other.sort_key()

    def covers(self, key: Optional[TopicKey]) -> bool:
        if self.key is None:
            return True
        return key is not None and self.key.matches(key)

    def __str__(self):
        ann = f" [{self.key}]" if self.key is not None else ""
        return f"{self.src} -> {self.dst}{ann}"


@dataclass(frozen=True)
class KernelObjectLabel:
    creator: str
    abstraction: Abstraction
    extra: Optional[str] = None


@dataclass(frozen=True)
class CommunicationGraph:
    nodes: Mapping[str, NodeKind] = field(default_factory=dict)
    edges: frozenset = frozenset()
    trusted: frozenset = frozenset()
    net_whitelist: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "nodes", dict(self.nodes))
        object.__setattr__(self, "edges", frozenset(self.edges))
        object.__setattr__(self, "trusted", frozenset(self.trusted))
        object.__setattr__(self, "net_whitelist", frozenset(self.net_whitelist))

    def __hash__(self):
        return hash((frozenset(self.nodes.items()), self.edges, self.trusted, self.net_whitelist))

    @classmethod
    def build(cls, nodes=(), edges=(), trusted=(), net_whitelist=()) -> "CommunicationGraph":
        """Convenience constructor.

        ``nodes`` may be a mapping of node -> kind or an iterable of names
        (kind inferred from the well-known sensor/sink names).  ``edges``
        accepts ``Edge`` objects or ``(src, dst[, key])`` tuples where key is
        a ``TopicKey`` or a ``"topic[::type]"`` string.
        """
        if isinstance(nodes, Mapping):
            kinds = {n: NodeKind(k) for n, k in nodes.items()}
        else:
            kinds = {n: default_kind(n) for n in nodes}
        es = set()
        for e in edges:
            if isinstance(e, Edge):
                es.add(e)
                continue
            src, dst, *rest = e
            key = rest[0] if rest else None
            if isinstance(key, str):
                key = TopicKey.parse(key)
            es.add(Edge(src, dst, key))
        return cls(kinds, es, trusted, net_whitelist)

    @cached_property
    def _out(self) -> dict:
        out: dict[str, list] = {}
        for e in self.edges:
            out.setdefault(e.src, []).append(e)
        return out

    def out_edges(self, node: str) -> list:
        return self._out.get(node, [])

    def successors(self, node: str) -> set:
        return {e.dst for e in self.out_edges(node)}

    def kind(self, node: str) -> NodeKind:
        return self.nodes[node]

    def apps(self) -> list:
        return sorted(n for n, k in self.nodes.items() if k is NodeKind.APP)

    def instances_of(self, name: str) -> list:
        """Node ids that bind to processes of application ``name``."""
        return sorted(
            n for n, k in self.nodes.items() if k is NodeKind.APP and app_name(n) == name
        )


# --- violations ------------------------------------------------------------


@dataclass(frozen=True)
class UndeclaredNode:
    node: str
    edge: Optional[Edge] = None

    def __str__(self):
        where = f" (edge {self.edge})" if self.edge else ""
        return f"UndeclaredNode({self.node}){where}"


@dataclass(frozen=True)
class UndeclaredTrusted:
    node: str

    def __str__(self):
        return f"UndeclaredTrusted({self.node})"


def validate_graph(g: CommunicationGraph) -> list:
    violations = []
    for e in sorted(g.edges):
        for end in (e.src, e.dst):
            if end not in g.nodes:
                violations.append(UndeclaredNode(end, e))
    for t in sorted(g.trusted):
        if t not in g.nodes:
            violations.append(UndeclaredTrusted(t))
    return violations


def reachable(g: CommunicationGraph, src: str, dst: str, avoiding: Iterable[str] = ()) -> bool:
    """True iff a directed path ``src -> ... -> dst`` avoids ``avoiding`` in its interior.

    ``src == dst`` is reachable by the empty path.
    """
    for n in (src, dst):
        if n not in g.nodes:
            raise UnknownNode(n)
    if src == dst:
        return True
    avoid = set(avoiding)
    seen = {src}
    queue = deque([src])
    while queue:
        cur = queue.popleft()
        for nxt in g.successors(cur):
            if nxt == dst:
                return True
            if nxt in seen or nxt in avoid:
                continue
            seen.add(nxt)
            queue.append(nxt)
    return False


def matching_edge(g: CommunicationGraph, src: str, dst: str, key: Optional[TopicKey] = None):
    for e in g.out_edges(src):
        if e.dst == dst and e.covers(key):
            return e
    return None


def permits(g: CommunicationGraph, src: str, dst: str, key: Optional[TopicKey] = None) -> Decision:
    return ALLOW if matching_edge(g, src, dst, key) is not None else DENY


def _subsumes(f: Edge, e: Edge) -> bool:
    """Every flow ``e`` permits is also permitted by ``f``."""
    if f.src != e.src or f.dst != e.dst:
        return False
    if f.key is None:
        return True
    if e.key is None or f.key.topic != e.key.topic:
        return False
    return f.key.type_name is None or f.key.type_name == e.key.type_name


def intersect_graphs(graphs: Iterable[CommunicationGraph]) -> CommunicationGraph:
    """Edge-wise AND: a flow survives only if every graph permits it."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("need at least one graph")
    if len(graphs) == 1:
        return graphs[0]
    first = graphs[0]
    common = set(first.nodes)
    for g in graphs[1:]:
        common &= set(g.nodes)
    edges = set()
    for g in graphs:
        for e in g.edges:
            if all(any(_subsumes(f, e) for f in h.out_edges(e.src)) for h in graphs):
                edges.add(e)
    trusted = frozenset.intersection(*(g.trusted for g in graphs))
    whitelist = frozenset.intersection(*(g.net_whitelist for g in graphs))
    return CommunicationGraph({n: first.nodes[n] for n in common}, edges, trusted, whitelist)
