"""User agent: bind graph node ids to live processes and load the graph."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import UnresolvedApp
from ..model import INSTANCE_SEP, CommunicationGraph, app_name
from ..refmon import ActivationRecord


@dataclass(frozen=True)
class LoadResult:
    activation: ActivationRecord
    mapping: dict  # node id -> pid


def resolve(g: CommunicationGraph, runtime) -> tuple:
    """Map app node ids to pids; returns ``(mapping, unresolved)``.

    Instance nodes ``Name@k`` take the running processes of ``Name`` in pid
    order; a plain node takes the first running process of that name.
    """
    mapping = {}
    unresolved = []
    by_app: dict = {}
    for n in g.apps():
        by_app.setdefault(app_name(n), []).append(n)
    for name, nodes in sorted(by_app.items()):
        pids = runtime.pids_of(name)
        instances = sorted((n for n in nodes if INSTANCE_SEP in n), key=_instance_index)
        free = list(pids)
        if name in nodes:
            if free:
                mapping[name] = free.pop(0)
            else:
                unresolved.append(name)
        for n in instances:
            if free:
                mapping[n] = free.pop(0)
            else:
                unresolved.append(n)
    return mapping, unresolved


def _instance_index(node: str):
    suffix = node.split(INSTANCE_SEP, 1)[1]
    return (0, int(suffix), "") if suffix.isdigit() else (1, 0, suffix)


def bind_and_load(g: CommunicationGraph, runtime, strict: bool = True) -> LoadResult:
    """Bind and activate ``g`` atomically.

    With ``strict`` every app node must resolve to a running process; when
    false only trusted nodes must (untrusted absentees simply have no
    process to grant anything to).  On failure nothing changes.
    """
    mapping, unresolved = resolve(g, runtime)
    missing = unresolved if strict else [n for n in unresolved if n in g.trusted]
    if missing:
        raise UnresolvedApp(missing[0])
    bindings = {pid: node for node, pid in mapping.items()}
    for pid in runtime.procs:
        bindings.setdefault(pid, runtime.procs[pid].name)
    rec = runtime.refmon.load_policy(g, bindings)
    return LoadResult(rec, mapping)


def unload(runtime) -> ActivationRecord:
    return runtime.refmon.unload_policy()
