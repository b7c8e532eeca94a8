"""Line-oriented policy file format.

::

    # comment
    nodes:
    CAMERA sensor
    Camera app
    ScrubStatus app trusted
    NETWORK sink
    edges:
    CAMERA -> Camera
    Camera -> ScrubStatus topic=CameraOutput,type=StatusType
    netwhitelist:
    fleet.example:443

Sections appear in the order above, each at most once, and may be omitted.
``#`` starts a comment anywhere on a line.  An empty file is the empty
(deny-everything) graph.  Serialization is canonical: sorted nodes, sorted
edges, sorted whitelist.
"""

from __future__ import annotations

import re

from ..errors import InvalidGraph, PolicySyntaxError, PolicyUndeclaredNode
from ..model import CommunicationGraph, Edge, NodeKind, TopicKey, validate_graph

SECTIONS = ("nodes", "edges", "netwhitelist")

NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.@-]*\Z")
TOPIC_RE = re.compile(r"[A-Za-z0-9_/.-]+\Z")
ADDR_RE = re.compile(r"[^\s#]+\Z")


def valid_name(s: str) -> bool:
    return bool(NAME_RE.match(s))


def valid_topic(s: str) -> bool:
    return bool(TOPIC_RE.match(s))


def _annotation(text: str, lineno: int) -> TopicKey:
    fields = {}
    for part in text.split(","):
        k, sep, v = part.partition("=")
        if not sep or k not in ("topic", "type"):
            raise PolicySyntaxError(lineno, f"bad annotation {part!r}")
        if k in fields:
            raise PolicySyntaxError(lineno, f"duplicate annotation field {k!r}")
        if not valid_topic(v):
            raise PolicySyntaxError(lineno, f"bad {k} value {v!r}")
        fields[k] = v
    if "topic" not in fields:
        raise PolicySyntaxError(lineno, "annotation needs topic=")
    return TopicKey(fields["topic"], fields.get("type"))


def parse_policy(text: str) -> CommunicationGraph:
    nodes: dict = {}
    trusted = set()
    edges = set()
    whitelist = set()
    section = None
    seen_sections: list = []

    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.endswith(":") and line[:-1] in SECTIONS:
            name = line[:-1]
            if name in seen_sections:
                raise PolicySyntaxError(lineno, f"duplicate section {name!r}")
            if seen_sections and SECTIONS.index(name) < SECTIONS.index(seen_sections[-1]):
                raise PolicySyntaxError(lineno, f"section {name!r} out of order")
            seen_sections.append(name)
            section = name
            continue
        if section is None:
            raise PolicySyntaxError(lineno, "content before any section header")
        toks = line.split()

        if section == "nodes":
            if len(toks) not in (2, 3) or not valid_name(toks[0]):
                raise PolicySyntaxError(lineno, "expected '<name> <app|sensor|sink> [trusted]'")
            try:
                kind = NodeKind(toks[1])
            except ValueError:
                raise PolicySyntaxError(lineno, f"unknown node role {toks[1]!r}") from None
            if len(toks) == 3 and toks[2] != "trusted":
                raise PolicySyntaxError(lineno, f"unknown node tag {toks[2]!r}")
            if toks[0] in nodes:
                raise PolicySyntaxError(lineno, f"node {toks[0]!r} declared twice")
            nodes[toks[0]] = kind
            if len(toks) == 3:
                trusted.add(toks[0])

        elif section == "edges":
            if len(toks) not in (3, 4) or toks[1] != "->":
                raise PolicySyntaxError(lineno, "expected '<src> -> <dst> [topic=T[,type=Y]]'")
            src, dst = toks[0], toks[2]
            for n in (src, dst):
                if not valid_name(n):
                    raise PolicySyntaxError(lineno, f"bad node name {n!r}")
                if n not in nodes:
                    raise PolicyUndeclaredNode(lineno, n)
            key = _annotation(toks[3], lineno) if len(toks) == 4 else None
            edges.add(Edge(src, dst, key))

        else:
            if len(toks) != 1 or not ADDR_RE.match(toks[0]):
                raise PolicySyntaxError(lineno, "expected one address per line")
            whitelist.add(toks[0])

    return CommunicationGraph(nodes, edges, trusted, whitelist)


def serialize_policy(g: CommunicationGraph) -> str:
    violations = validate_graph(g)
    if violations:
        raise InvalidGraph(violations)
    bad = [n for n in g.nodes if not valid_name(n)]
    bad += [a for a in g.net_whitelist if not ADDR_RE.match(a)]
    if bad:
        raise ValueError(f"not representable in a policy file: {sorted(bad)}")
    out = ["nodes:"]
    for n in sorted(g.nodes):
        tag = " trusted" if n in g.trusted else ""
        out.append(f"{n} {g.nodes[n].value}{tag}")
    out.append("edges:")
    for e in sorted(g.edges):
        ann = ""
        if e.key is not None:
            ann = f" topic={e.key.topic}"
            if e.key.type_name is not None:
                ann += f",type={e.key.type_name}"
        out.append(f"{e.src} -> {e.dst}{ann}")
    out.append("netwhitelist:")
    out.extend(sorted(g.net_whitelist))
    return "\n".join(out) + "\n"
