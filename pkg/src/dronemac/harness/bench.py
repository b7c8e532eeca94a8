"""Publisher/subscriber micro-benchmarks and the redirection benchmark.

Latency is measured in simulator time (deterministic, from the runtime's
latency model) and in wall-clock time (reported only).  One publisher and
one subscriber exchange fixed-size messages at 10 Hz.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass, field

from ..model import CAMERA, NETWORK, CommunicationGraph, EnforcementMode, TopicKey
from ..policy import bind_and_load
from . import fixtures as F
from . import programs as P

WORKLOADS = {
    "array-1m": 1_048_576,
    "pointcloud-1m": 1_048_576,
    "struct-32k": 32_768,
    "navsat": 128,
    "range": 32,
}
REDIRECT_VARIANTS = ("direct", "null", "blur")


@dataclass
class BenchStats:
    workload: str
    mode: str
    payload_bytes: int
    reps: int
    count: int
    delivered: list = field(default_factory=list)
    median_latency_us: float = 0.0
    wall_median_ms: float = 0.0
    messages_per_sec: float = 0.0
    overhead_vs_none: float = None

    def summary(self) -> dict:
        d = asdict(self)
        d["kind"] = "bench"
        return d


def _pubsub_graph() -> CommunicationGraph:
    return CommunicationGraph.build(
        nodes=["Publisher", "Subscriber"],
        edges=[("Publisher", "Subscriber", TopicKey("bench"))],
    )


def _run_pubsub(size: int, mode: EnforcementMode, count: int):
    fx = F.Fixture(mode)
    period = P.DEFAULT_PERIOD
    fx.launch("Publisher", {"size": size, "count": count, "period": period})
    sub = fx.launch("Subscriber")
    fx.runtime.loop.run_until(0)
    if mode is EnforcementMode.FULL:
        bind_and_load(_pubsub_graph(), fx.runtime)
    t0 = time.perf_counter()
    fx.runtime.run_for((count + 2) * period)
    wall = time.perf_counter() - t0
    lat = [d for _, d in fx.runtime.latencies]
    delivered = len(fx.runtime.procs[sub].program.received)
    return lat, delivered, wall


def bench(workload: str, mode, reps: int = 10, count: int = 100, baseline: bool = True) -> BenchStats:
    if workload not in WORKLOADS:
        raise KeyError(workload)
    mode = EnforcementMode(mode)
    size = WORKLOADS[workload]
    stats = BenchStats(workload, mode.value, size, reps, count)
    rep_medians, walls = [], []
    for _ in range(reps):
        lat, delivered, wall = _run_pubsub(size, mode, count)
        stats.delivered.append(delivered)
        rep_medians.append(statistics.median(lat) if lat else float("nan"))
        walls.append(wall)
    stats.median_latency_us = statistics.median(rep_medians)
    stats.wall_median_ms = statistics.median(walls) * 1e3
    total = sum(stats.delivered)
    stats.messages_per_sec = total / sum(walls) if sum(walls) > 0 else float("inf")
    if baseline and mode is not EnforcementMode.NONE:
        base = bench(workload, EnforcementMode.NONE, reps, count, baseline=False)
        stats.overhead_vs_none = stats.median_latency_us / base.median_latency_us - 1.0
    elif mode is EnforcementMode.NONE:
        stats.overhead_vs_none = 0.0
    return stats


def redirect_graph(variant: str) -> CommunicationGraph:
    nodes = [CAMERA, NETWORK, "Camera", "FleetUplink"]
    edges = [(CAMERA, "Camera"), ("FleetUplink", NETWORK)]
    trusted = []
    if variant == "direct":
        edges.append(("Camera", "FleetUplink", TopicKey(P.CAM_TOPIC)))
    else:
        filt = "NullFilter" if variant == "null" else "BlurFilter"
        nodes.append(filt)
        trusted.append(filt)
        edges += [
            ("Camera", filt, TopicKey(P.CAM_TOPIC)),
            (filt, "FleetUplink", TopicKey(P.BLURRED_TOPIC)),
        ]
    return CommunicationGraph.build(nodes, edges, trusted, [F.FLEET_ADDR])


def _run_redirect(variant: str, mode: EnforcementMode, count: int):
    fx = F.Fixture(mode)
    cam = fx.launch("Camera", {"count": count})
    if variant != "direct":
        fx.launch("NullFilter" if variant == "null" else "BlurFilter")
    fx.launch("FleetUplink", {"addresses": (F.FLEET_ADDR,)})
    fx.runtime.loop.run_until(0)
    if mode is EnforcementMode.FULL:
        bind_and_load(redirect_graph(variant), fx.runtime)
    t0 = time.perf_counter()
    fx.runtime.run_for((count + 2) * P.DEFAULT_PERIOD)
    wall = time.perf_counter() - t0
    sent = fx.runtime.procs[cam].program.sent_at
    lat, seen = [], set()
    for p in fx.refmon.network_log:
        seq = P.frame_seq(p.payload)
        if seq is None or seq in seen:
            continue
        seen.add(seq)
        lat.append(p.time - sent[seq])
    return lat, len(seen), wall


def bench_redirect(variant: str, mode=EnforcementMode.FULL, reps: int = 10, count: int = 50) -> BenchStats:
    if variant not in REDIRECT_VARIANTS:
        raise KeyError(variant)
    mode = EnforcementMode(mode)
    stats = BenchStats(f"redirect-{variant}", mode.value, P.FRAME_HEADER.size + P.FRAME_SIZE**2, reps, count)
    rep_medians, walls = [], []
    for _ in range(reps):
        lat, delivered, wall = _run_redirect(variant, mode, count)
        stats.delivered.append(delivered)
        rep_medians.append(statistics.median(lat) if lat else float("nan"))
        walls.append(wall)
    stats.median_latency_us = statistics.median(rep_medians)
    stats.wall_median_ms = statistics.median(walls) * 1e3
    stats.messages_per_sec = sum(stats.delivered) / sum(walls) if sum(walls) > 0 else float("inf")
    return stats


def redirect_suite(mode=EnforcementMode.FULL, reps: int = 10, count: int = 50) -> list:
    out = [bench_redirect(v, mode, reps, count) for v in REDIRECT_VARIANTS]
    direct = out[0].median_latency_us
    for s in out:
        s.overhead_vs_none = s.median_latency_us / direct - 1.0
    return out
