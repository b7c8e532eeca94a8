"""Deterministic fixtures: certificate authority, boot stack, drone runtimes.

Everything here is seeded, so two runs build bit-identical identities,
images, keys and reports.
"""

from __future__ import annotations

import logging
from typing import Optional

from .. import crypto
from ..attest import MeasurementChain, TrustedExecutionEnvironment, Verifier
from ..errors import BadCertificate, DigestMismatch
from ..middleware import LatencyModel, Runtime
from ..model import (
    CAMERA,
    FILESYSTEM,
    GPS,
    NETWORK,
    SENSORS,
    SINKS,
    TAMPERLOG,
    AppManifest,
    CommunicationGraph,
    EnforcementMode,
    NodeKind,
    TopicKey,
    default_kind,
)
from . import programs as P

log = logging.getLogger(__name__)

CA_SEED = b"dronemac-ca"
DRONE_SEED = b"dronemac-drone-0"

BOOT_COMPONENTS = (
    ("bootloader", b"simulated bootloader v2.1\x00" * 16),
    ("kernel", b"simulated kernel 5.10 with mediation hooks\x00" * 32),
    ("refmon", b"reference monitor module\x00" * 16),
    ("middleware", b"pub/sub middleware with redirection\x00" * 16),
)

STATUS_ADDR = "status.fleet:443"
FLEET_ADDR = "fleet.coordinator:443"
EXFIL_ADDR = "exfil.example:80"
CLOUD_ADDR = "cloud.example:443"
MAP_ADDR = "map.example:443"
TELEMETRY_ADDR = "telemetry.example:443"

# application name -> (program, publishes, subscribes)
APP_CATALOG = {
    "Camera": ("Camera", {P.CAM_TOPIC}, set()),
    "CameraStatus": ("CameraStatus", set(), {P.CAM_TOPIC, P.SANITIZED_TOPIC}),
    "BadCameraStatus": ("BadCameraStatus", set(), set()),
    "ScrubStatus": ("ScrubStatus", {P.SANITIZED_TOPIC}, {P.CAM_TOPIC}),
    "BlurFilter": ("BlurFilter", {P.BLURRED_TOPIC}, {P.CAM_TOPIC, P.NAV_TOPIC}),
    "NullFilter": ("NullFilter", {P.BLURRED_TOPIC}, {P.CAM_TOPIC, P.NAV_TOPIC}),
    "Navigator": ("Navigator", {P.NAV_TOPIC}, {P.CAM_TOPIC}),
    "FleetUplink": ("FleetUplink", set(), {P.CAM_TOPIC, P.BLURRED_TOPIC}),
    "GpsReader": ("GpsReader", {P.POSITION_TOPIC}, set()),
    "TrustedLogger": ("TrustedLogger", {P.RECEIPT_TOPIC}, {P.POSITION_TOPIC}),
    "Telemetry": ("Telemetry", set(), {P.POSITION_TOPIC, P.RECEIPT_TOPIC}),
    "Publisher": ("BenchPublisher", {"bench"}, set()),
    "Subscriber": ("BenchSubscriber", set(), {"bench"}),
}


def boot_chain() -> MeasurementChain:
    return MeasurementChain.of(BOOT_COMPONENTS)


class Fixture:
    """A booted drone with a runtime in the given enforcement mode."""

    def __init__(
        self,
        mode: EnforcementMode = EnforcementMode.FULL,
        boot=BOOT_COMPONENTS,
        latency: LatencyModel = LatencyModel(),
    ):
        self.mode = EnforcementMode(mode)
        self.ca = crypto.CertificateAuthority(CA_SEED)
        self.tee = TrustedExecutionEnvironment(DRONE_SEED)
        self.tee.measure_boot(boot)
        self.runtime = Runtime(
            self.mode, self.ca.public_key, tee=self.tee, loader=P.load_program, latency=latency
        )
        km = self.runtime.refmon
        self.gps_seq = 0
        km.devices[CAMERA] = lambda: P.camera_pixels()
        km.devices[GPS] = self._next_fix
        self._identities: dict = {}

    def _next_fix(self) -> bytes:
        self.gps_seq += 1
        return P.gps_fix(self.gps_seq)

    @property
    def refmon(self):
        return self.runtime.refmon

    def image(self, name: str) -> bytes:
        program = APP_CATALOG[name][0] if name in APP_CATALOG else "PlatformApp"
        return P.make_image(program, salt=name.encode())

    def identity(self, name: str, publishes=None, subscribes=None):
        if publishes is None and subscribes is None and name in self._identities:
            return self._identities[name]
        _, pubs, subs = APP_CATALOG.get(name, (None, set(), set()))
        manifest = AppManifest(
            frozenset(publishes if publishes is not None else pubs),
            frozenset(subscribes if subscribes is not None else subs),
        )
        ident = self.ca.issue(name, self.image(name), manifest)
        if publishes is None and subscribes is None:
            self._identities[name] = ident
        return ident

    def launch(self, name: str, args: Optional[dict] = None, image: Optional[bytes] = None, identity=None) -> Optional[int]:
        """Launch ``name``; returns the pid, or None when the launch is refused."""
        ident = identity if identity is not None else self.identity(name)
        img = image if image is not None else self.image(name)
        try:
            return self.runtime.launch_app(img, ident, args).pid
        except (BadCertificate, DigestMismatch) as exc:
            log.debug("launch of %s refused: %s", name, exc)
            return None

    def verifier(self, expected_apps=None) -> Verifier:
        return Verifier(self.tee.public_key, boot_chain().value, dict(expected_apps or {}))


def expected_apps(fx: Fixture, names) -> dict:
    return {n: crypto.digest(fx.image(n)) for n in names}


def camera_policy(extra_whitelist=()) -> CommunicationGraph:
    """Host policy for the camera status experiments.

    Camera status reaches the status app only through the scrubber, the
    scrubber is trusted, and only the status apps may use the network.
    """
    return CommunicationGraph.build(
        nodes=[CAMERA, NETWORK, "Camera", "CameraStatus", "ScrubStatus", "BadCameraStatus"],
        edges=[
            (CAMERA, "Camera"),
            ("Camera", "ScrubStatus", TopicKey(P.CAM_TOPIC, P.STATUS_TYPE)),
            ("ScrubStatus", "CameraStatus", TopicKey(P.SANITIZED_TOPIC)),
            ("CameraStatus", NETWORK),
            ("BadCameraStatus", NETWORK),
        ],
        trusted=["ScrubStatus"],
        net_whitelist=[STATUS_ADDR, *extra_whitelist],
    )


# -- synthetic baseline platform --------------------------------------------

PLATFORM_APPS = 24
PLATFORM_OFFSETS = (1, 5)
PLATFORM_CHORDS = 4
PLATFORM_CHORD_OFFSET = 11
PLATFORM_NET = (0, 4, 8, 12, 16, 20)
PLATFORM_FILES = (2, 7, 11, 15, 19)
PLATFORM_TAMPERLOG = (3, 21)
PLATFORM_SENSORS = {0: CAMERA, 1: CAMERA, 2: GPS, 3: GPS}


def platform_app(i: int) -> str:
    return f"svc{i:02d}"


def platform_graph() -> CommunicationGraph:
    """A 29-node, 69-edge platform: 24 services plus sensor and sink nodes."""
    nodes = {n: default_kind(n) for n in (*sorted(SENSORS), *sorted(SINKS))}
    edges = []
    for i in range(PLATFORM_APPS):
        nodes[platform_app(i)] = NodeKind.APP
    for i in range(PLATFORM_APPS):
        key = TopicKey(f"t{i:02d}", "msg")
        for j in _platform_subscribers(i):
            edges.append((platform_app(i), platform_app(j), key))
    for i, s in PLATFORM_SENSORS.items():
        edges.append((s, platform_app(i)))
    for i in PLATFORM_NET:
        edges.append((platform_app(i), NETWORK))
    for i in PLATFORM_FILES:
        edges.append((platform_app(i), FILESYSTEM))
    for i in PLATFORM_TAMPERLOG:
        edges.append((platform_app(i), TAMPERLOG))
    whitelist = [f"backend{i:02d}.example:443" for i in PLATFORM_NET]
    return CommunicationGraph.build(nodes, edges, (), whitelist)


def _platform_subscribers(i: int) -> list:
    subs = [(i + d) % PLATFORM_APPS for d in PLATFORM_OFFSETS]
    if i < PLATFORM_CHORDS:
        subs.append((i + PLATFORM_CHORD_OFFSET) % PLATFORM_APPS)
    return subs


def launch_platform(fx: Fixture) -> dict:
    """Launch every platform service with args that exercise each of its flows."""
    subscribes: dict = {i: [] for i in range(PLATFORM_APPS)}
    for i in range(PLATFORM_APPS):
        for j in _platform_subscribers(i):
            subscribes[j].append(f"t{i:02d}")
    pids = {}
    for i in range(PLATFORM_APPS):
        name = platform_app(i)
        args = {
            "publishes": f"t{i:02d}",
            "subscribes": sorted(subscribes[i]),
            "sensors": [PLATFORM_SENSORS[i]] if i in PLATFORM_SENSORS else [],
            "address": f"backend{i:02d}.example:443" if i in PLATFORM_NET else None,
            "file": f"/var/svc/{name}.dat" if i in PLATFORM_FILES else None,
            "tamperlog": i in PLATFORM_TAMPERLOG,
        }
        ident = fx.identity(name, publishes={f"t{i:02d}"}, subscribes=set(subscribes[i]))
        pids[name] = fx.launch(name, args, identity=ident)
    return pids
