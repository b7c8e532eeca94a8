"""Simulated topic-based publish/subscribe middleware.

The :class:`Runtime` is a single-threaded deterministic event loop over
integer logical time (microseconds).  Applications are cooperative
:class:`Program` objects driven by the loop.  Channel setup and every
message delivery go through the :class:`~dronemac.refmon.ReferenceMonitor`
hooks, so the middleware can only *enable* flows the kernel layer permits.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import crypto
from .errors import (
    BadCertificate,
    DigestMismatch,
    EdgeNotPermitted,
    ManifestDenied,
    NotAdvertised,
    NotRunning,
    NotTrusted,
    PermissionDenied,
)
from .model import (
    Abstraction,
    AppIdentity,
    EnforcementMode,
    TopicKey,
    permits,
)
from .refmon import ActivationRecord, KernelObject, ReferenceMonitor

log = logging.getLogger(__name__)

DEFAULT_TYPE = "bytes"


class ProcState(enum.Enum):
    RUNNING = "RUNNING"
    STOPPED = "STOPPED"


class ChannelState(enum.Enum):
    OPEN = "OPEN"
    TORN_DOWN = "TORN_DOWN"


@dataclass(frozen=True)
class LatencyModel:
    """Logical-time cost model, in microseconds."""

    base_us: int = 120
    per_kib_us: float = 1.5
    hook_us: int = 6
    cached_hook_us: int = 2

    def transfer(self, nbytes: int) -> int:
        return self.base_us + int(nbytes * self.per_kib_us / 1024)


class EventLoop:
    def __init__(self):
        self.now = 0
        self._heap: list = []
        self._seq = itertools.count()
        self.steps = 0

    def call_at(self, when: int, fn: Callable, *args):
        heapq.heappush(self._heap, (max(int(when), self.now), next(self._seq), fn, args))

    def call_later(self, delay: int, fn: Callable, *args):
        self.call_at(self.now + int(delay), fn, *args)

    def pending(self) -> int:
        return len(self._heap)

    def step(self) -> bool:
        """Run every event scheduled at the next logical instant."""
        if not self._heap:
            return False
        t = self._heap[0][0]
        self.now = t
        while self._heap and self._heap[0][0] == t:
            _, _, fn, args = heapq.heappop(self._heap)
            fn(*args)
        self.steps += 1
        return True

    def run_until(self, t: int):
        while self._heap and self._heap[0][0] <= t:
            self.step()
        self.now = max(self.now, t)

    def run(self, max_steps: int = 1_000_000):
        n = 0
        while n < max_steps and self.step():
            n += 1


class Program:
    """Base class for simulated application code."""

    def __init__(self, args: Optional[dict] = None):
        self.args = dict(args or {})

    def on_start(self, ctx: "AppContext"):
        pass

    def on_message(self, ctx: "AppContext", key: TopicKey, payload: bytes):
        pass


@dataclass
class AppProcess:
    pid: int
    identity: AppIdentity
    binary_image: bytes
    launched_at: int
    state: ProcState = ProcState.RUNNING
    program: Optional[Program] = None
    received: list = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.identity.name


@dataclass
class Channel:
    channel_id: int
    publisher: int
    subscriber: int
    key: TopicKey
    transport: Abstraction
    state: ChannelState = ChannelState.OPEN
    obj: Optional[KernelObject] = None
    injected: bool = False
    buffer: deque = field(default_factory=deque)
    delivered: int = 0

    @property
    def is_open(self) -> bool:
        return self.state is ChannelState.OPEN


@dataclass(frozen=True)
class Registration:
    pid: int
    key: TopicKey
    role: str
    transport: Abstraction = Abstraction.LOCAL_STREAM


@dataclass(frozen=True)
class _Redirect:
    src: int
    dst: int
    key: TopicKey
    via: int
    out_key: TopicKey


class AppContext:
    """What a running program sees of the system."""

    def __init__(self, runtime: "Runtime", pid: int):
        self.runtime = runtime
        self.pid = pid

    @property
    def now(self) -> int:
        return self.runtime.loop.now

    @property
    def kernel(self) -> ReferenceMonitor:
        return self.runtime.refmon

    @property
    def node(self) -> str:
        return self.runtime.refmon.node_of(self.pid)

    def log(self, msg: str):
        self.runtime.note(f"{self.runtime.procs[self.pid].name}[{self.pid}]: {msg}")

    def advertise(self, topic: str, type_name: str = DEFAULT_TYPE):
        return self.runtime.advertise(self.pid, TopicKey(topic, type_name))

    def subscribe(self, topic: str, type_name: Optional[str] = None):
        return self.runtime.subscribe(self.pid, TopicKey(topic, type_name))

    def publish(self, topic: str, type_name: str, payload: bytes, after: int = 0):
        key = TopicKey(topic, type_name)
        if after:
            self.runtime.loop.call_later(after, self._publish_if_running, key, payload)
            return None
        return self.runtime.publish(self.pid, key, payload)

    def _publish_if_running(self, key, payload):
        if self.runtime.is_running(self.pid):
            self.runtime.publish(self.pid, key, payload)

    def net_send(self, address: str, payload: bytes) -> bool:
        return self.kernel.net_send(self.pid, address, payload).allowed

    def read_sensor(self, sensor: str) -> Optional[bytes]:
        try:
            return self.kernel.read_sensor(self.pid, sensor)
        except PermissionDenied:
            self.log(f"sensor {sensor} denied")
            return None

    def write_sink(self, sink: str, data: bytes) -> bool:
        return self.kernel.write_sink(self.pid, sink, data).allowed

    def pid_of(self, name: str) -> Optional[int]:
        return self.runtime.pid_of(name)

    def call_later(self, delay: int, fn: Callable, *args):
        def guarded():
            if self.runtime.is_running(self.pid):
                fn(*args)

        self.runtime.loop.call_later(delay, guarded)

    def every(self, period: int, fn: Callable, *args, start: int = 0):
        def tick():
            if not self.runtime.is_running(self.pid):
                return
            fn(*args)
            self.runtime.loop.call_later(period, tick)

        self.runtime.loop.call_later(start, tick)


ProgramLoader = Callable[[bytes, Optional[dict]], Optional[Program]]


class Runtime:
    """One drone's software stack: kernel, middleware and attestation hooks."""

    def __init__(
        self,
        mode: EnforcementMode = EnforcementMode.FULL,
        ca_public: Optional[bytes] = None,
        *,
        tee=None,
        loader: Optional[ProgramLoader] = None,
        latency: LatencyModel = LatencyModel(),
        scheme=crypto.DEFAULT_SCHEME,
    ):
        self.mode = EnforcementMode(mode)
        self.ca_public = ca_public
        self.scheme = scheme
        self.tee = tee
        self.loader = loader
        self.latency = latency
        self.loop = EventLoop()
        self.refmon = ReferenceMonitor(
            clock=lambda: self.loop.now, enforcing=self.mode is EnforcementMode.FULL
        )
        self.refmon.add_listener(self._on_policy_change)
        self.procs: dict[int, AppProcess] = {}
        self.channels: dict[int, Channel] = {}
        self._regs: list[Registration] = []
        self._redirects: dict = {}
        self._pids = itertools.count(100)
        self._chan_ids = itertools.count(1)
        self.transcript: list[str] = []
        self.denied_pairs: list = []
        self.launch_history: list = []
        self.deliveries = 0
        self.latencies: list = []
        self.auto_match = True
        self._match_pending = False

    # -- bookkeeping -------------------------------------------------------

    def note(self, msg: str):
        self.transcript.append(f"t={self.loop.now:>10}us {msg}")

    def is_running(self, pid: int) -> bool:
        p = self.procs.get(pid)
        return p is not None and p.state is ProcState.RUNNING

    def _require_running(self, pid: int) -> AppProcess:
        p = self.procs.get(pid)
        if p is None or p.state is not ProcState.RUNNING:
            raise NotRunning(f"pid {pid} is not running")
        return p

    def pid_of(self, name: str) -> Optional[int]:
        for pid in sorted(self.procs):
            p = self.procs[pid]
            if p.name == name and p.state is ProcState.RUNNING:
                return pid
        return None

    def pids_of(self, name: str) -> list:
        return [pid for pid in sorted(self.procs) if self.procs[pid].name == name and self.is_running(pid)]

    def node_of(self, pid: int) -> str:
        return self.refmon.node_of(pid)

    def _pid_for_node(self, node: str) -> Optional[int]:
        for pid in sorted(self.procs):
            if self.is_running(pid) and self.node_of(pid) == node:
                return pid
        return None

    def _enforcing_manifests(self) -> bool:
        return self.mode is not EnforcementMode.NONE

    # -- launch ------------------------------------------------------------

    def launch_app(self, image: bytes, identity: AppIdentity, args: Optional[dict] = None) -> AppProcess:
        if self.mode is not EnforcementMode.NONE:
            if self.ca_public is None or not crypto.verify_identity(identity, self.ca_public, self.scheme):
                self.note(f"launch {identity.name}: bad certificate")
                raise BadCertificate(identity.name)
        actual = crypto.digest(image)
        if self.mode is EnforcementMode.FULL and actual != identity.binary_digest:
            self.note(f"launch {identity.name}: binary digest mismatch")
            raise DigestMismatch(identity.name)
        pid = next(self._pids)
        proc = AppProcess(pid, identity, bytes(image), self.loop.now)
        self.procs[pid] = proc
        self.refmon.register_process(pid, identity.name)
        self.launch_history.append((identity.name, actual, self.loop.now))
        if self.tee is not None:
            self.tee.record_launch(identity.name, actual, self.loop.now)
        if self.loader is not None:
            proc.program = self.loader(image, args)
        self.note(f"launched {identity.name} pid={pid}")
        if proc.program is not None:
            self.loop.call_later(0, self._start, pid)
        return proc

    def _start(self, pid: int):
        p = self.procs[pid]
        if p.state is ProcState.RUNNING and p.program is not None:
            p.program.on_start(AppContext(self, pid))

    def stop_app(self, pid: int):
        p = self._require_running(pid)
        p.state = ProcState.STOPPED
        self.refmon.stop_process(pid)
        for ch in self.channels.values():
            if ch.is_open and pid in (ch.publisher, ch.subscriber):
                self._tear(ch)
        for fkey, r in list(self._redirects.items()):
            if pid in (r.src, r.dst, r.via):
                del self._redirects[fkey]
        self.note(f"stopped {p.name} pid={pid}")

    # -- registration ------------------------------------------------------

    def advertise(self, pid: int, key: TopicKey) -> Registration:
        p = self._require_running(pid)
        if key.type_name is None:
            key = TopicKey(key.topic, DEFAULT_TYPE)
        if self._enforcing_manifests() and not p.identity.manifest.may_publish(key.topic):
            self.note(f"{p.name}: advertise {key} denied by manifest")
            raise ManifestDenied(f"{p.name} may not publish {key.topic}")
        reg = Registration(pid, key, "pub")
        if reg not in self._regs:
            self._regs.append(reg)
            self._schedule_match()
        return reg

    def subscribe(self, pid: int, key: TopicKey, transport=Abstraction.LOCAL_STREAM) -> Registration:
        p = self._require_running(pid)
        if self._enforcing_manifests() and not p.identity.manifest.may_subscribe(key.topic):
            self.note(f"{p.name}: subscribe {key} denied by manifest")
            raise ManifestDenied(f"{p.name} may not subscribe {key.topic}")
        reg = Registration(pid, key, "sub", Abstraction(transport))
        if reg not in self._regs:
            self._regs.append(reg)
            self._schedule_match()
        return reg

    def _schedule_match(self):
        # discovery runs once per instant, after every registration made in it
        if self.auto_match and not self._match_pending:
            self._match_pending = True
            self.loop.call_later(0, self._auto_match)

    def _auto_match(self):
        self._match_pending = False
        self.matchmake()

    def registrations(self, role: Optional[str] = None) -> list:
        return [
            r for r in self._regs if self.is_running(r.pid) and (role is None or r.role == role)
        ]

    def probe_type(self, topic: str) -> set:
        return {r.key.type_name for r in self.registrations("pub") if r.key.topic == topic}

    # -- matchmaking -------------------------------------------------------

    def open_channels(self) -> list:
        return [c for c in self.channels.values() if c.is_open]

    def _find_open(self, pub: int, sub: int, key: TopicKey) -> Optional[Channel]:
        for ch in self.channels.values():
            if ch.is_open and ch.publisher == pub and ch.subscriber == sub and ch.key == key:
                return ch
        return None

    def _manifest_ok(self, reg: Registration) -> bool:
        if not self._enforcing_manifests():
            return True
        m = self.procs[reg.pid].identity.manifest
        return m.may_publish(reg.key.topic) if reg.role == "pub" else m.may_subscribe(reg.key.topic)

    def _open(self, pub: int, sub: int, key: TopicKey, transport, injected=False) -> Optional[Channel]:
        v = self.refmon.hook_connect(pub, sub, transport, key)
        if not v.allowed:
            self.denied_pairs.append((self.procs[pub].name, self.procs[sub].name, key))
            self.note(f"channel {self.procs[pub].name}->{self.procs[sub].name} [{key}] denied")
            return None
        ch = Channel(next(self._chan_ids), pub, sub, key, Abstraction(transport), obj=v.obj, injected=injected)
        self.channels[ch.channel_id] = ch
        return ch

    def matchmake(self) -> set:
        """Connect every matching publisher/subscriber pair the policy allows."""
        pubs = [r for r in self.registrations("pub") if self._manifest_ok(r)]
        subs = [r for r in self.registrations("sub") if self._manifest_ok(r)]
        g = self.refmon.graph if self.mode is EnforcementMode.FULL else None
        for p in pubs:
            for s in subs:
                if p.pid == s.pid or not p.key.matches(s.key):
                    continue
                key = p.key
                if self._find_open(p.pid, s.pid, key) is not None:
                    continue
                if g is not None:
                    src, dst = self.node_of(p.pid), self.node_of(s.pid)
                    if not permits(g, src, dst, key):
                        if (p.pid, s.pid, key) in self._redirects:
                            continue
                        plan = self._interposition(g, p.pid, s.pid, key)
                        if plan is not None:
                            via, out_key = plan
                            try:
                                self.redirect((p.pid, s.pid, key), via, out_key)
                                continue
                            except (EdgeNotPermitted, NotTrusted) as exc:
                                self.note(f"redirect failed: {exc}")
                self._open(p.pid, s.pid, key, s.transport)
        return set(c.channel_id for c in self.open_channels())

    def _interposition(self, g, pub: int, sub: int, key: TopicKey):
        """Find a trusted declassifier T with ``pub -> T`` (key) and ``T -> sub`` edges."""
        src, dst = self.node_of(pub), self.node_of(sub)
        for t in sorted(g.trusted):
            if not permits(g, src, t, key):
                continue
            onward = [e for e in g.out_edges(t) if e.dst == dst]
            if not onward:
                continue
            via = self._pid_for_node(t)
            if via is None:
                continue
            for e in sorted(onward):
                for r in self.registrations("pub"):
                    if r.pid != via:
                        continue
                    if e.key is None or e.key.matches(r.key):
                        return via, r.key
        return None

    # -- redirection -------------------------------------------------------

    def redirect(self, flow, via: int, out_key: TopicKey):
        """Route ``flow = (src, dst, key)`` through trusted process ``via``.

        Returns ``(torn, created)``.  The ``via -> dst`` hop bypasses the
        subscriber manifest, but both hops must still pass the kernel layer.
        """
        src, dst, key = flow
        g = self.refmon.graph
        vnode = self.node_of(via)
        if g is None or vnode not in g.trusted:
            raise NotTrusted(vnode)
        if out_key.type_name is None:
            types = sorted(
                r.key.type_name
                for r in self.registrations("pub")
                if r.pid == via and r.key.topic == out_key.topic
            )
            out_key = TopicKey(out_key.topic, types[0] if types else DEFAULT_TYPE)
        if not permits(g, self.node_of(src), vnode, key) or not permits(g, vnode, self.node_of(dst), out_key):
            raise EdgeNotPermitted(f"{self.node_of(src)} -> {vnode} -> {self.node_of(dst)}")
        torn = []
        for ch in list(self.channels.values()):
            if ch.is_open and ch.publisher == src and ch.subscriber == dst and ch.key.matches(key):
                self._tear(ch)
                torn.append(ch)
        created = []
        for a, b, k in ((src, via, key), (via, dst, out_key)):
            ch = self._find_open(a, b, k)
            if ch is None:
                ch = self._open(a, b, k, Abstraction.LOCAL_STREAM, injected=True)
                if ch is None:
                    raise EdgeNotPermitted(f"kernel refused {self.node_of(a)} -> {self.node_of(b)}")
            created.append(ch)
        self._redirects[(src, dst, key)] = _Redirect(src, dst, key, via, out_key)
        self.note(
            f"redirect {self.procs[src].name}->{self.procs[dst].name} [{key}] via "
            f"{self.procs[via].name} as [{out_key}]"
        )
        return (torn[0] if torn else None), created

    def _tear(self, ch: Channel):
        ch.state = ChannelState.TORN_DOWN
        ch.buffer.clear()
        if ch.obj is not None:
            ch.obj.open = False

    def _on_policy_change(self, rec: ActivationRecord):
        g = self.refmon.graph if self.mode is EnforcementMode.FULL else None
        for ch in self.channels.values():
            if ch.is_open and ch.obj is not None and not ch.obj.open:
                self._tear(ch)
        for fkey, r in list(self._redirects.items()):
            still = (
                g is not None
                and self.is_running(r.via)
                and self.node_of(r.via) in g.trusted
                and permits(g, self.node_of(r.src), self.node_of(r.via), r.key)
                and permits(g, self.node_of(r.via), self.node_of(r.dst), r.out_key)
                and not permits(g, self.node_of(r.src), self.node_of(r.dst), r.key)
            )
            if still:
                continue
            del self._redirects[fkey]
            for ch in self.channels.values():
                if ch.is_open and ch.injected and (
                    (ch.publisher, ch.subscriber, ch.key) in ((r.src, r.via, r.key), (r.via, r.dst, r.out_key))
                ):
                    self._tear(ch)
        self.note(f"policy v{rec.graph_version} {'loaded' if rec.loaded else 'unloaded'}")
        self.matchmake()

    # -- data path ---------------------------------------------------------

    def publish(self, pid: int, key: TopicKey, payload: bytes) -> int:
        self._require_running(pid)
        if not any(r.role == "pub" and r.pid == pid and r.key == key for r in self._regs):
            raise NotAdvertised(f"pid {pid} has not advertised {key}")
        count = 0
        for ch in list(self.channels.values()):
            if not ch.is_open or ch.publisher != pid or not ch.key.matches(key):
                continue
            before = self.refmon.cache_hits
            v = self.refmon.hook_send(pid, ch.obj, payload)
            if not v.allowed:
                continue
            delay = self.latency.transfer(len(payload))
            if self.refmon.enforcing:
                cached = self.refmon.cache_hits > before
                delay += self.latency.cached_hook_us if cached else self.latency.hook_us
            ch.buffer.append((self.loop.now, bytes(payload)))
            self.loop.call_later(delay, self._deliver, ch.channel_id)
            count += 1
        return count

    def _deliver(self, channel_id: int):
        ch = self.channels[channel_id]
        if not ch.is_open or not ch.buffer:
            return
        sent_at, payload = ch.buffer.popleft()
        sub = self.procs[ch.subscriber]
        if sub.state is not ProcState.RUNNING:
            return
        ch.delivered += 1
        self.deliveries += 1
        self.latencies.append((ch.channel_id, self.loop.now - sent_at))
        sub.received.append((ch.key, payload))
        if sub.program is not None:
            sub.program.on_message(AppContext(self, sub.pid), ch.key, payload)

    # -- convenience -------------------------------------------------------

    def run_for(self, duration_us: int):
        self.loop.run_until(self.loop.now + duration_us)
