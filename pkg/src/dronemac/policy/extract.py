"""Derive a candidate communication graph from an audit log.

Works like audit2allow in reverse privilege terms: every distinct ALLOW flow
``(src, dst, key)`` observed becomes an edge.  The result is only a starting
point for an administrator and is deliberately wrapped so it cannot be handed
to the loader by accident.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

from ..model import NETWORK, CommunicationGraph, Decision, Edge, TopicKey, default_kind
from ..refmon import AuditRecord, parse_audit


@dataclass(frozen=True)
class PolicyCandidate:
    graph: CommunicationGraph
    records: int

    def accept(self) -> CommunicationGraph:
        """Explicit administrator step that turns the candidate into a policy."""
        return self.graph


def extract_graph(log: Union[str, Iterable[AuditRecord]]) -> PolicyCandidate:
    records = parse_audit(log) if isinstance(log, str) else list(log)
    nodes = {}
    edges = set()
    whitelist = set()
    for r in records:
        if r.verdict is not Decision.ALLOW or r.src == r.dst:
            continue
        key = None
        if r.key is not None:
            if r.key.startswith("@"):
                whitelist.add(r.key[1:])
            else:
                key = TopicKey.parse(r.key)
        for n in (r.src, r.dst):
            nodes.setdefault(n, default_kind(n))
        edges.add(Edge(r.src, r.dst, key))
    whitelist = whitelist if NETWORK in nodes else set()
    return PolicyCandidate(CommunicationGraph(nodes, edges, (), whitelist), len(records))
