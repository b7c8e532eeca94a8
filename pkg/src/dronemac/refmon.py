"""Simulated kernel layer with mandatory-access-control hooks.

Every inter-process abstraction the simulator offers (streams, datagrams,
pipes, shared memory, message queues, files, sensor devices and the network
interface) is mediated by a hook that consults the active communication
graph at process granularity.  Each hook evaluation is appended to the audit
log, whose text export is the input of :func:`dronemac.policy.extract_graph`.

Audit export format: one record per line, tab separated::

    time  hook  src  dst  key  abstraction  verdict  graph-version

``key`` is ``-`` when absent, ``topic`` or ``topic::type`` for middleware
flows and ``@address`` for outbound network sends.
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import AuditParseError, InvalidGraph, NoSuchFile, NotRunning, PermissionDenied
from .model import (
    ALLOW,
    DENY,
    FILESYSTEM,
    NETWORK,
    Abstraction,
    CommunicationGraph,
    Decision,
    KernelObjectLabel,
    TopicKey,
    matching_edge,
    validate_graph,
)

log = logging.getLogger(__name__)

DEVICE = "device"
SINK = "sink"


@dataclass(frozen=True)
class Verdict:
    decision: Decision
    rule: Optional[str]
    hook: str
    src: str
    dst: str
    abstraction: str
    key: Optional[str] = None
    graph_version: int = 0
    obj: Optional["KernelObject"] = field(default=None, compare=False, repr=False)

    @property
    def allowed(self) -> bool:
        return self.decision is ALLOW


@dataclass(frozen=True)
class AuditRecord:
    time: int
    hook: str
    src: str
    dst: str
    key: Optional[str]
    abstraction: str
    verdict: Decision
    graph_version: int

    def to_line(self) -> str:
        return "\t".join(
            [
                str(self.time),
                self.hook,
                self.src,
                self.dst,
                self.key if self.key is not None else "-",
                self.abstraction,
                self.verdict.value,
                str(self.graph_version),
            ]
        )

    @classmethod
    def from_line(cls, line: str, lineno: int = 0) -> "AuditRecord":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 8:
            raise AuditParseError(lineno, f"expected 8 fields, got {len(parts)}")
        time, hook, src, dst, key, abstraction, verdict, version = parts
        try:
            return cls(
                int(time),
                hook,
                src,
                dst,
                None if key == "-" else key,
                abstraction,
                Decision(verdict),
                int(version),
            )
        except ValueError as exc:
            raise AuditParseError(lineno, str(exc)) from None


def export_audit(records) -> str:
    return "".join(r.to_line() + "\n" for r in records)


def parse_audit(text: str) -> list:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        out.append(AuditRecord.from_line(line, n))
    return out


class KernelObject:
    """A kernel abstraction instance; its label is fixed at creation."""

    def __init__(self, object_id: int, label: KernelObjectLabel):
        self._object_id = object_id
        self._label = label
        self.open = True
        self.endpoints: tuple = ()
        self.key: Optional[TopicKey] = None
        self.port = None
        self.owner: Optional[int] = None
        self.data = bytearray()
        self.queue: deque = deque()
        self.inbox: dict = {}
        self.attached: set = set()

    @property
    def object_id(self) -> int:
        return self._object_id

    @property
    def label(self) -> KernelObjectLabel:
        return self._label

    @property
    def abstraction(self) -> Abstraction:
        return self._label.abstraction

    def __repr__(self):
        return f"<KernelObject {self.object_id} {self.abstraction.value} by {self.label.creator}>"


@dataclass(frozen=True)
class ActivationRecord:
    graph_version: int
    loaded: bool
    torn: tuple = ()
    bindings: tuple = ()


@dataclass
class _Proc:
    pid: int
    name: str
    node: str
    running: bool = True


@dataclass(frozen=True)
class NetworkPacket:
    time: int
    src: str
    address: str
    payload: bytes


class ReferenceMonitor:
    """The simulated kernel: owns kernel objects, hooks and the audit log."""

    def __init__(self, clock: Callable[[], int] = lambda: 0, enforcing: bool = True):
        self.clock = clock
        self.enforcing = enforcing
        self.graph: Optional[CommunicationGraph] = None
        self.graph_version = 0
        self._versions = itertools.count(1)
        self._ids = itertools.count(1)
        self._procs: dict[int, _Proc] = {}
        self._cache: dict = {}
        self._audit: list[AuditRecord] = []
        self._listeners: list = []
        self.objects: dict[int, KernelObject] = {}
        self.files: dict[str, KernelObject] = {}
        self.ports: dict = {}
        self.devices: dict[str, Callable[[], bytes]] = {}
        self.network_log: list[NetworkPacket] = []
        self.sink_log: dict[str, list] = {}
        self.hook_evaluations = 0
        self.cache_hits = 0

    # -- processes ---------------------------------------------------------

    def register_process(self, pid: int, name: str) -> str:
        node = self._instance_node(name)
        self._procs[pid] = _Proc(pid, name, node)
        return node

    def _instance_node(self, name: str) -> str:
        if self.graph is None:
            return name
        instances = [n for n in self.graph.instances_of(name) if n != name]
        if not instances:
            return name
        taken = {p.node for p in self._procs.values() if p.running}
        for n in instances:
            if n not in taken:
                return n
        return name

    def stop_process(self, pid: int):
        self._procs[pid].running = False

    def node_of(self, pid: int) -> str:
        try:
            return self._procs[pid].node
        except KeyError:
            raise NotRunning(f"unknown pid {pid}") from None

    def running(self, pid: int) -> bool:
        p = self._procs.get(pid)
        return p is not None and p.running

    def processes(self) -> dict:
        return {pid: p.name for pid, p in self._procs.items() if p.running}

    def add_listener(self, fn):
        self._listeners.append(fn)

    # -- policy ------------------------------------------------------------

    def load_policy(self, g: CommunicationGraph, bindings: Optional[dict] = None) -> ActivationRecord:
        violations = validate_graph(g)
        if violations:
            raise InvalidGraph(violations)
        version = next(self._versions)
        # bindings and graph switch together, before any further hook runs
        self.graph = g
        self.graph_version = version
        self._cache.clear()
        if bindings is None:
            for p in self._procs.values():
                p.node = p.name
            for pid in sorted(self._procs):
                p = self._procs[pid]
                if p.running:
                    p.node = self._instance_node(p.name)
        else:
            for pid, p in self._procs.items():
                p.node = bindings.get(pid, p.name)
        torn = self._teardown()
        rec = ActivationRecord(version, True, tuple(torn), tuple(sorted((bindings or {}).items())))
        log.debug("policy v%d loaded, %d objects torn", version, len(torn))
        for fn in self._listeners:
            fn(rec)
        return rec

    def unload_policy(self) -> ActivationRecord:
        self.graph = None
        self.graph_version = next(self._versions)
        self._cache.clear()
        for p in self._procs.values():
            p.node = p.name
        rec = ActivationRecord(self.graph_version, False)
        for fn in self._listeners:
            fn(rec)
        return rec

    def _teardown(self) -> list:
        torn = []
        for obj in self.objects.values():
            if not obj.open or obj.abstraction not in (
                Abstraction.LOCAL_STREAM,
                Abstraction.SHARED_MEMORY,
            ):
                continue
            if obj.abstraction is Abstraction.LOCAL_STREAM:
                a, b = obj.endpoints
                ok = self._decide(a, b, obj.key, obj.abstraction.value)[0]
            else:
                ok = all(
                    self._decide(obj.label.creator, n, None, obj.abstraction.value)[0]
                    for n in obj.attached
                )
            if not ok:
                obj.open = False
                obj.inbox.clear()
                obj.queue.clear()
                torn.append(obj.object_id)
        return torn

    # -- decision core -----------------------------------------------------

    def _decide(self, src: str, dst: str, key, abstraction: str, address=None):
        ck = (src, dst, key, abstraction, address, self.graph_version)
        hit = self._cache.get(ck)
        if hit is not None:
            self.cache_hits += 1
            return hit
        res = self._decide_uncached(src, dst, key, address)
        self._cache[ck] = res
        return res

    def _decide_uncached(self, src, dst, key, address):
        if not self.enforcing:
            return ALLOW, "enforcement-off"
        g = self.graph
        if g is None:
            return ALLOW, "no-policy"
        if src == dst:
            return ALLOW, "self"
        if src not in g.nodes or dst not in g.nodes:
            return DENY, None
        edge = matching_edge(g, src, dst, key)
        if edge is None:
            return DENY, None
        if dst == NETWORK and address is not None:
            if address not in g.net_whitelist:
                return DENY, None
            return ALLOW, f"v{self.graph_version}:{edge}+whitelist:{address}"
        return ALLOW, f"v{self.graph_version}:{edge}"

    def _evaluate(self, hook, src, dst, abstraction, key=None, address=None) -> Verdict:
        self.hook_evaluations += 1
        decision, rule = self._decide(src, dst, key, abstraction, address)
        key_text = f"@{address}" if address is not None else (str(key) if key is not None else None)
        rec = AuditRecord(
            self.clock(), hook, src, dst, key_text, abstraction, decision, self.graph_version
        )
        self._audit.append(rec)
        return Verdict(decision, rule, hook, src, dst, abstraction, key_text, self.graph_version)

    def audit_log(self) -> tuple:
        return tuple(self._audit)

    def export_audit(self) -> str:
        return export_audit(self._audit)

    # -- hooks (pure verdicts + audit) ------------------------------------

    def hook_connect(self, src: int, dst: int, kind=Abstraction.LOCAL_STREAM, key=None) -> Verdict:
        kind = Abstraction(kind)
        s, d = self.node_of(src), self.node_of(dst)
        v = self._evaluate("connect", s, d, kind.value, key)
        if not v.allowed:
            return v
        obj = self._new_object(s, kind)
        obj.endpoints = (s, d)
        obj.key = key
        obj.owner = dst
        return _with_obj(v, obj)

    def hook_send(self, src: int, obj: KernelObject, payload: bytes = b"", dst_addr=None) -> Verdict:
        s = self.node_of(src)
        if dst_addr is not None:
            return self._evaluate("send", s, NETWORK, Abstraction.NETWORK_STREAM.value, None, dst_addr)
        if obj.abstraction is Abstraction.LOCAL_STREAM:
            a, b = obj.endpoints
            peer = b if s == a else a
            return self._evaluate("send", s, peer, obj.abstraction.value, obj.key)
        if obj.abstraction is Abstraction.DATAGRAM:
            return self._evaluate("send", s, self.node_of(obj.owner), obj.abstraction.value)
        raise ValueError(f"hook_send on {obj.abstraction.value}")

    def _deliver_verdict(self, sender_node: str, receiver: int, abstraction, key=None) -> Verdict:
        return self._evaluate("send", sender_node, self.node_of(receiver), abstraction.value, key)

    def hook_file(self, src: int, op: str, path: str) -> Verdict:
        s = self.node_of(src)
        if op == "create":
            return self._evaluate("file_create", s, FILESYSTEM, Abstraction.FILE.value)
        f = self.files.get(path)
        if f is None:
            raise NoSuchFile(path)
        creator = f.label.creator
        if op == "read":
            return self._evaluate("file_read", creator, s, Abstraction.FILE.value)
        if op == "write":
            v = self._evaluate("file_write", s, FILESYSTEM, Abstraction.FILE.value)
            if v.allowed and s != creator and not self._decide(s, creator, None, "file")[0]:
                return Verdict(DENY, None, v.hook, s, FILESYSTEM, v.abstraction, None, v.graph_version)
            return v
        raise ValueError(f"unknown file op {op!r}")

    def hook_shm_attach(self, src: int, obj: KernelObject) -> Verdict:
        return self._evaluate(
            "shm_attach", obj.label.creator, self.node_of(src), Abstraction.SHARED_MEMORY.value
        )

    def hook_mq_send(self, src: int, obj: KernelObject) -> Verdict:
        return self._evaluate(
            "mq_send", self.node_of(src), obj.label.creator, Abstraction.MESSAGE_QUEUE.value
        )

    def hook_pipe_connect(self, src: int, obj: KernelObject) -> Verdict:
        return self._evaluate("pipe_connect", obj.label.creator, self.node_of(src), Abstraction.PIPE.value)

    def hook_device(self, src: int, sensor: str) -> Verdict:
        return self._evaluate("device", sensor, self.node_of(src), DEVICE)

    def hook_sink(self, src: int, sink: str) -> Verdict:
        return self._evaluate("sink", self.node_of(src), sink, SINK)

    # -- syscalls ----------------------------------------------------------

    def _new_object(self, creator: str, kind: Abstraction, extra=None) -> KernelObject:
        obj = KernelObject(next(self._ids), KernelObjectLabel(creator, kind, extra))
        self.objects[obj.object_id] = obj
        return obj

    def connect(self, src: int, dst: int, key=None) -> KernelObject:
        v = self.hook_connect(src, dst, Abstraction.LOCAL_STREAM, key)
        if not v.allowed:
            raise PermissionDenied(v)
        return v.obj

    def stream_send(self, src: int, obj: KernelObject, payload: bytes) -> Verdict:
        if not obj.open:
            raise PermissionDenied(
                Verdict(DENY, None, "send", self.node_of(src), "?", obj.abstraction.value)
            )
        v = self.hook_send(src, obj, payload)
        if not v.allowed:
            raise PermissionDenied(v)
        obj.inbox.setdefault(v.dst, deque()).append(bytes(payload))
        return v

    def stream_recv(self, pid: int, obj: KernelObject) -> list:
        q = obj.inbox.get(self.node_of(pid))
        if not q:
            return []
        out = list(q)
        q.clear()
        return out

    def bind(self, pid: int, port) -> list:
        """Bind a datagram port; datagrams queued before binding are mediated now."""
        obj = self.ports.get(port)
        if obj is None:
            obj = self._new_object(self.node_of(pid), Abstraction.DATAGRAM, extra=str(port))
            obj.port = port
            self.ports[port] = obj
        obj.owner = pid
        pending, obj.queue = list(obj.queue), deque()
        delivered = []
        for sender_node, payload in pending:
            v = self._deliver_verdict(sender_node, pid, Abstraction.DATAGRAM)
            if v.allowed:
                obj.inbox.setdefault("rx", deque()).append(payload)
                delivered.append(payload)
        return delivered

    def sendto(self, src: int, port, payload: bytes) -> Optional[Verdict]:
        """Datagram send: silently dropped on DENY.  Returns None while queued."""
        obj = self.ports.get(port)
        sender = self.node_of(src)
        if obj is None:
            obj = self._new_object(sender, Abstraction.DATAGRAM, extra=str(port))
            obj.port = port
            self.ports[port] = obj
        if obj.owner is None:
            # receiver unknown until bind: the sender identity travels with the datagram
            obj.queue.append((sender, bytes(payload)))
            return None
        v = self._deliver_verdict(sender, obj.owner, Abstraction.DATAGRAM)
        if v.allowed:
            obj.inbox.setdefault("rx", deque()).append(bytes(payload))
        return v

    def recvfrom(self, pid: int, port) -> list:
        obj = self.ports.get(port)
        if obj is None or obj.owner != pid:
            return []
        q = obj.inbox.get("rx", deque())
        out = list(q)
        q.clear()
        return out

    def net_send(self, src: int, address: str, payload: bytes) -> Verdict:
        v = self.hook_send(src, None, payload, dst_addr=address)
        if v.allowed:
            self.network_log.append(NetworkPacket(self.clock(), v.src, address, bytes(payload)))
        return v

    def create_file(self, src: int, path: str) -> KernelObject:
        v = self.hook_file(src, "create", path)
        if not v.allowed:
            raise PermissionDenied(v)
        node = self.node_of(src)
        if path in self.files:
            raise FileExistsError(path)
        obj = self._new_object(node, Abstraction.FILE, extra=node)
        self.files[path] = obj
        return obj

    def write_file(self, src: int, path: str, data: bytes, append: bool = True):
        v = self.hook_file(src, "write", path)
        if not v.allowed:
            raise PermissionDenied(v)
        f = self.files[path]
        if not append:
            f.data.clear()
        f.data.extend(data)

    def read_file(self, src: int, path: str) -> bytes:
        v = self.hook_file(src, "read", path)
        if not v.allowed:
            raise PermissionDenied(v)
        return bytes(self.files[path].data)

    def file_creator(self, path: str) -> str:
        f = self.files.get(path)
        if f is None:
            raise NoSuchFile(path)
        return f.label.extra

    def export_files(self) -> dict:
        return {p: {"creator": f.label.extra, "data": f.data.hex()} for p, f in self.files.items()}

    def import_files(self, saved: dict):
        for path, rec in saved.items():
            obj = self._new_object(rec["creator"], Abstraction.FILE, extra=rec["creator"])
            obj.data.extend(bytes.fromhex(rec["data"]))
            self.files[path] = obj

    def shm_create(self, src: int, size: int = 0) -> KernelObject:
        obj = self._new_object(self.node_of(src), Abstraction.SHARED_MEMORY)
        obj.data.extend(bytes(size))
        return obj

    def shm_attach(self, src: int, obj: KernelObject) -> KernelObject:
        v = self.hook_shm_attach(src, obj)
        if not v.allowed:
            raise PermissionDenied(v)
        obj.attached.add(v.dst)
        return obj

    def shm_read(self, src: int, obj: KernelObject) -> bytes:
        node = self.node_of(src)
        if not obj.open or (node != obj.label.creator and node not in obj.attached):
            raise PermissionDenied(
                Verdict(DENY, None, "shm_read", obj.label.creator, node, "shared-memory")
            )
        return bytes(obj.data)

    def shm_write(self, src: int, obj: KernelObject, data: bytes):
        if self.node_of(src) != obj.label.creator:
            raise PermissionDenied(
                Verdict(DENY, None, "shm_write", self.node_of(src), obj.label.creator, "shared-memory")
            )
        obj.data[: len(data)] = data

    def mq_create(self, src: int) -> KernelObject:
        return self._new_object(self.node_of(src), Abstraction.MESSAGE_QUEUE)

    def mq_send(self, src: int, obj: KernelObject, payload: bytes) -> Verdict:
        v = self.hook_mq_send(src, obj)
        if v.allowed:
            obj.queue.append(bytes(payload))
        return v

    def mq_receive(self, src: int, obj: KernelObject) -> list:
        if self.node_of(src) != obj.label.creator:
            return []
        out = list(obj.queue)
        obj.queue.clear()
        return out

    def pipe_create(self, src: int) -> KernelObject:
        return self._new_object(self.node_of(src), Abstraction.PIPE)

    def pipe_connect(self, src: int, obj: KernelObject) -> KernelObject:
        v = self.hook_pipe_connect(src, obj)
        if not v.allowed:
            raise PermissionDenied(v)
        obj.attached.add(v.dst)
        return obj

    def pipe_write(self, src: int, obj: KernelObject, data: bytes):
        if self.node_of(src) != obj.label.creator:
            raise PermissionDenied(
                Verdict(DENY, None, "pipe_write", self.node_of(src), obj.label.creator, "pipe")
            )
        obj.queue.append(bytes(data))

    def pipe_read(self, src: int, obj: KernelObject) -> list:
        if self.node_of(src) not in obj.attached:
            return []
        out = list(obj.queue)
        obj.queue.clear()
        return out

    def read_sensor(self, src: int, sensor: str) -> bytes:
        v = self.hook_device(src, sensor)
        if not v.allowed:
            raise PermissionDenied(v)
        return self.devices[sensor]()

    def write_sink(self, src: int, sink: str, data: bytes) -> Verdict:
        v = self.hook_sink(src, sink)
        if v.allowed:
            self.sink_log.setdefault(sink, []).append((self.clock(), v.src, bytes(data)))
        return v

    def sink_contents(self) -> dict:
        """Everything that left the trusted boundary, grouped by sink node."""
        out = {NETWORK: [p.payload for p in self.network_log]}
        out[FILESYSTEM] = [bytes(f.data) for f in self.files.values()]
        for sink, entries in self.sink_log.items():
            out[sink] = [e[2] for e in entries]
        return out


def _with_obj(v: Verdict, obj: KernelObject) -> Verdict:
    return Verdict(
        v.decision, v.rule, v.hook, v.src, v.dst, v.abstraction, v.key, v.graph_version, obj
    )

