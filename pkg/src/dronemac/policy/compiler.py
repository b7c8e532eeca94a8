"""Compile high-level privacy policies down to communication graphs.

The inventory describes each installed application: which sensors it reads,
whether it talks to the network or writes files, whether it needs the raw
camera feed, and its manifest.  Application-to-application flows are derived
from manifest topic overlap (publisher topic subscribed by another app).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..errors import UnresolvedTrustedApp
from ..model import (
    CAMERA,
    FILESYSTEM,
    GPS,
    INSTANCE_SEP,
    NETWORK,
    SENSORS,
    SINKS,
    TAMPERLOG,
    AppIdentity,
    AppManifest,
    CommunicationGraph,
    Edge,
    NodeKind,
    TopicKey,
    default_kind,
    reachable,
)


class PolicyKind(enum.Enum):
    PROCESS_LOCALLY = "ProcessLocally"
    BLUR_EXPORTED_IMAGES = "BlurExportedImages"
    USE_DRONE_LANES = "UseDroneLanes"


@dataclass(frozen=True)
class HighLevelPolicy:
    kind: PolicyKind
    trusted_app: Optional[str] = None
    log_destination: str = TAMPERLOG

    @classmethod
    def process_locally(cls) -> "HighLevelPolicy":
        return cls(PolicyKind.PROCESS_LOCALLY)

    @classmethod
    def blur_exported_images(cls, blur: str = "BlurFilter") -> "HighLevelPolicy":
        return cls(PolicyKind.BLUR_EXPORTED_IMAGES, blur)

    @classmethod
    def use_drone_lanes(cls, logger: str = "TrustedLogger", destination: str = TAMPERLOG) -> "HighLevelPolicy":
        return cls(PolicyKind.USE_DRONE_LANES, logger, destination)


@dataclass(frozen=True)
class AppSpec:
    name: str
    manifest: AppManifest = AppManifest()
    sensors: frozenset = frozenset()
    network: bool = False
    files: bool = False
    raw_feed: bool = False
    net_destinations: tuple = ()
    identity: Optional[AppIdentity] = None

    def __post_init__(self):
        object.__setattr__(self, "sensors", frozenset(self.sensors))
        object.__setattr__(self, "net_destinations", tuple(self.net_destinations))
        unknown = self.sensors - SENSORS
        if unknown:
            raise ValueError(f"unknown sensors {sorted(unknown)}")


@dataclass(frozen=True)
class AppInventory:
    apps: tuple = field(default_factory=tuple)

    def __post_init__(self):
        apps = tuple(self.apps)
        names = [a.name for a in apps]
        if len(set(names)) != len(names):
            raise ValueError("duplicate application names in inventory")
        object.__setattr__(self, "apps", apps)

    @classmethod
    def of(cls, apps: Iterable[AppSpec]) -> "AppInventory":
        return cls(tuple(apps))

    def get(self, name: str) -> Optional[AppSpec]:
        for a in self.apps:
            if a.name == name:
                return a
        return None

    def names(self) -> list:
        return [a.name for a in self.apps]

    def flows(self) -> list:
        """App-to-app edges, one per shared topic, from manifest overlap."""
        out = []
        for a in self.apps:
            for b in self.apps:
                if a.name == b.name:
                    continue
                topics = {k.topic for k in a.manifest.publishes} & {
                    k.topic for k in b.manifest.subscribes
                }
                out.extend(Edge(a.name, b.name, TopicKey(t)) for t in sorted(topics))
        return out


def _published_topics(spec: AppSpec) -> list:
    return sorted({k.topic for k in spec.manifest.publishes})


def _annotated(src: str, dst: str, topics: list) -> list:
    if not topics:
        return [Edge(src, dst)]
    return [Edge(src, dst, TopicKey(t)) for t in topics]


def base_graph(inv: AppInventory) -> CommunicationGraph:
    """The unrestricted graph implied by the inventory alone."""
    nodes = {n: default_kind(n) for n in (*sorted(SENSORS), *sorted(SINKS))}
    edges = set(inv.flows())
    for a in inv.apps:
        nodes[a.name] = NodeKind.APP
        for s in a.sensors:
            edges.add(Edge(s, a.name))
        if a.network:
            edges.add(Edge(a.name, NETWORK))
        if a.files:
            edges.add(Edge(a.name, FILESYSTEM))
    return _finish(inv, nodes, edges, ())


def _finish(inv: AppInventory, nodes, edges, trusted) -> CommunicationGraph:
    whitelist = set()
    for e in edges:
        if e.dst == NETWORK:
            spec = inv.get(e.src.split(INSTANCE_SEP, 1)[0])
            if spec is not None:
                whitelist.update(spec.net_destinations)
    return CommunicationGraph(nodes, edges, trusted, whitelist)


def _closure(start: Iterable[str], succ) -> set:
    seen = set(start)
    stack = list(seen)
    while stack:
        cur = stack.pop()
        for nxt in succ(cur):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def compile_policy(p: HighLevelPolicy, inv: AppInventory) -> CommunicationGraph:
    if p.kind is PolicyKind.PROCESS_LOCALLY:
        return _process_locally(inv)
    spec = inv.get(p.trusted_app or "")
    if spec is None:
        raise UnresolvedTrustedApp(p.trusted_app)
    if p.kind is PolicyKind.BLUR_EXPORTED_IMAGES:
        return _blur_exported_images(inv, spec)
    return _use_drone_lanes(inv, spec, p.log_destination)


def _process_locally(inv: AppInventory) -> CommunicationGraph:
    g = base_graph(inv)
    apps = set(inv.names())
    # every app downstream of the camera inherits the no-export restriction
    tainted = _closure(
        [a.name for a in inv.apps if CAMERA in a.sensors],
        lambda n: {d for d in g.successors(n) if d in apps},
    )
    edges = {e for e in g.edges if not (e.src in tainted and e.dst in (NETWORK, FILESYSTEM))}
    out = _finish(inv, g.nodes, edges, ())
    assert not reachable(out, CAMERA, NETWORK) and not reachable(out, CAMERA, FILESYSTEM)
    return out


def _blur_exported_images(inv: AppInventory, blur: AppSpec) -> CommunicationGraph:
    """Route camera-derived data to the network only through the blur app.

    Consumers that need the raw feed keep a direct edge but are themselves
    cut off from the network; if one of them is network facing it gets a
    dedicated blur instance for its egress (two or more instances in total).
    """
    base = base_graph(inv)
    b = blur.name
    apps = {a.name: a for a in inv.apps if a.name != b}
    sources = sorted(n for n, a in apps.items() if CAMERA in a.sensors)

    # taint propagates only along edges that stay raw
    tainted = set(sources)
    stack = list(sources)
    while stack:
        cur = stack.pop()
        for e in base.out_edges(cur):
            if e.dst in apps and apps[e.dst].raw_feed and e.dst not in tainted:
                tainted.add(e.dst)
                stack.append(e.dst)

    egress = sorted(n for n in tainted if apps[n].network and n not in sources)
    if egress:
        primary = f"{b}{INSTANCE_SEP}1"
        dedicated = {n: f"{b}{INSTANCE_SEP}{i}" for i, n in enumerate(egress, 2)}
    else:
        primary = b
        dedicated = {}
    instances = [primary, *dedicated.values()]
    blur_out = _published_topics(blur)

    nodes = {n: k for n, k in base.nodes.items() if n != b}
    for inst in instances:
        nodes[inst] = NodeKind.APP
    edges = set()
    for e in base.edges:
        if b in (e.src, e.dst):
            # the blur app's own flows attach to the primary instance
            if e.src != CAMERA:
                src = primary if e.src == b else e.src
                dst = primary if e.dst == b else e.dst
                edges.add(Edge(src, dst, e.key))
            continue
        if e.src in tainted:
            if e.dst == NETWORK:
                continue
            if e.dst in apps and not apps[e.dst].raw_feed:
                edges.add(Edge(e.src, primary, e.key))
                edges.update(_annotated(primary, e.dst, blur_out))
                continue
        edges.add(e)
    for s in sources:
        edges.update(_annotated(s, primary, _published_topics(apps[s])))
    edges.add(Edge(primary, NETWORK))
    for app, inst in dedicated.items():
        edges.update(_annotated(app, inst, _published_topics(apps[app])))
        edges.add(Edge(inst, NETWORK))

    out = _finish(inv, nodes, edges, instances)
    assert not reachable(out, CAMERA, NETWORK, instances)
    return out


def _use_drone_lanes(inv: AppInventory, logger: AppSpec, destination: str) -> CommunicationGraph:
    """Passive lane logging: GPS-derived output is recorded by the trusted logger."""
    base = base_graph(inv)
    lg = logger.name
    nodes = dict(base.nodes)
    nodes.setdefault(destination, default_kind(destination))
    readers = sorted(a.name for a in inv.apps if GPS in a.sensors and a.name != lg)
    log_out = _published_topics(logger)
    edges = set()
    for e in base.edges:
        if e.src == lg and e.dst in SINKS:
            continue
        if e.src in readers and e.dst in nodes and nodes[e.dst] is NodeKind.APP and e.dst != lg:
            edges.add(Edge(e.src, lg, e.key))
            edges.update(_annotated(lg, e.dst, log_out))
            continue
        edges.add(e)
    edges.add(Edge(GPS, lg))
    for r in readers:
        edges.update(_annotated(r, lg, _published_topics(inv.get(r))))
    edges.add(Edge(lg, destination))
    return _finish(inv, nodes, edges, (lg,))
