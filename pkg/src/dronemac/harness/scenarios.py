"""Attack/defense scenarios run under each enforcement mode.

A scenario LEAKs when a sliding window of its sensitive sentinel shows up in
any payload that reached the NETWORK sink (minus the scenario's trusted
destinations) or the FILESYSTEM.  Otherwise it is BLOCKED.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from typing import Callable

from .. import crypto
from ..errors import UnknownScenario
from ..model import (
    CAMERA,
    FILESYSTEM,
    GPS,
    NETWORK,
    TAMPERLOG,
    AppManifest,
    CommunicationGraph,
    Decision,
    EnforcementMode,
    TopicKey,
)
from ..policy import AppInventory, AppSpec, HighLevelPolicy, bind_and_load, compile_policy
from . import fixtures as F
from . import programs as P

log = logging.getLogger(__name__)

NONE = EnforcementMode.NONE
MANIFEST = EnforcementMode.MANIFEST_ONLY
FULL = EnforcementMode.FULL
MODES = (NONE, MANIFEST, FULL)


class Outcome(enum.Enum):
    LEAK = "LEAK"
    BLOCKED = "BLOCKED"


LEAK = Outcome.LEAK
BLOCKED = Outcome.BLOCKED


@dataclass(frozen=True)
class Scenario:
    name: str
    title: str
    setup: Callable
    expect: dict
    duration_us: int = 2 * P.SECOND
    sentinel: bytes = P.CAMERA_SENTINEL
    trusted_destinations: frozenset = frozenset()


@dataclass
class ScenarioResult:
    name: str
    mode: EnforcementMode
    outcome: Outcome
    expected: Outcome
    leaks: list
    checks: dict
    transcript: list
    sink_hex: list
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.outcome is self.expected and all(self.checks.values())

    def summary(self) -> dict:
        return {
            "kind": "scenario",
            "scenario": self.name,
            "mode": self.mode.value,
            "outcome": self.outcome.value,
            "expected": self.expected.value,
            "ok": self.ok,
            "leaks": len(self.leaks),
            "checks": self.checks,
            **self.details,
        }


def _enforce(fx, graph):
    """Load the host policy; it only changes verdicts when the mode enforces."""
    if fx.mode is FULL:
        bind_and_load(graph, fx.runtime, strict=False)


def _step0(fx):
    # let programs register so discovery can run before data flows
    fx.runtime.loop.run_until(fx.runtime.loop.now)


# -- scenario set-ups: each returns a check function over the finished run --


def _camera_stack(fx):
    """Camera, scrubber and a benign status app, as in the reference setup."""
    fx.launch("Camera")
    fx.launch("ScrubStatus")
    fx.launch("CameraStatus", {"address": F.STATUS_ADDR})


def setup_certificate_check(fx):
    _camera_stack(fx)
    forged_ca = crypto.CertificateAuthority(b"attacker-ca")
    forged = forged_ca.issue(
        "BadCameraStatus", fx.image("BadCameraStatus"), AppManifest(frozenset(), frozenset({P.CAM_TOPIC}))
    )
    pid = fx.launch("BadCameraStatus", {"address": F.STATUS_ADDR}, identity=forged)
    forged_ok = pid is not None
    if pid is None:
        fx.launch("BadCameraStatus", {"address": F.STATUS_ADDR})
    _step0(fx)
    _enforce(fx, F.camera_policy())

    def checks(fx, res):
        return {"forged_certificate_rejected": forged_ok == (fx.mode is NONE)}

    return checks


def setup_binary_swap(fx):
    fx.launch("Camera")
    fx.launch("ScrubStatus")
    swapped = fx.launch(
        "CameraStatus", {"address": F.STATUS_ADDR}, image=fx.image("BadCameraStatus")
    )
    _step0(fx)
    _enforce(fx, F.camera_policy())

    def checks(fx, res):
        v = fx.verifier(F.expected_apps(fx, ["CameraStatus"]))
        nonce = v.challenge()
        verdict = v.verify(fx.tee.attest(nonce), nonce)
        res.details["attestation"] = str(verdict)
        if swapped is None:
            return {"swap_refused_at_launch": fx.mode is FULL}
        return {"swap_visible_in_attestation": verdict.reason == "launch-digest-mismatch"}

    return checks


def setup_scrub_redirection(fx):
    fx.launch("Camera")
    fx.launch("ScrubStatus")
    fx.launch("CameraStatus", {"type": None, "address": F.STATUS_ADDR})
    _step0(fx)
    _enforce(fx, F.camera_policy())

    def checks(fx, res):
        status = [
            p for p in fx.refmon.network_log if p.src == "CameraStatus" and len(p.payload) == 1
        ]
        res.details["status_bytes"] = len(status)
        if fx.mode is not FULL:
            return {}
        times = [p.time for p in status]
        spaced = all(b - a >= 10 * P.SECOND for a, b in zip(times, times[1:]))
        return {"status_byte_delivered": bool(status), "rate_limited": spaced}

    return checks


def setup_direct_os_channel(fx):
    _camera_stack(fx)
    fx.launch("BadCameraStatus", {"direct": True, "address": F.STATUS_ADDR, "connect_at": 50_000})
    _step0(fx)
    _enforce(fx, F.camera_policy())

    def checks(fx, res):
        denied = [
            r
            for r in fx.refmon.audit_log()
            if r.hook == "connect" and r.src == "BadCameraStatus" and r.dst == "Camera"
            and r.verdict is Decision.DENY
        ]
        if fx.mode is not FULL:
            return {}
        return {"direct_connect_denied_in_audit": bool(denied)}

    return checks


def net_whitelist_policy():
    return CommunicationGraph.build(
        nodes=[CAMERA, NETWORK, "Camera", "FleetUplink"],
        edges=[
            (CAMERA, "Camera"),
            ("Camera", "FleetUplink", TopicKey(P.CAM_TOPIC)),
            ("FleetUplink", NETWORK),
        ],
        net_whitelist=[F.FLEET_ADDR],
    )


def setup_net_whitelist(fx):
    fx.launch("Camera")
    fx.launch("FleetUplink", {"addresses": (F.FLEET_ADDR, F.EXFIL_ADDR)})
    _step0(fx)
    _enforce(fx, net_whitelist_policy())

    def checks(fx, res):
        fleet = [p for p in fx.refmon.network_log if p.address == F.FLEET_ADDR]
        res.details["whitelisted_deliveries"] = len(fleet)
        return {"whitelisted_address_delivered": bool(fleet)}

    return checks


def blur_inventory() -> AppInventory:
    cat = F.APP_CATALOG
    return AppInventory.of(
        [
            AppSpec("Camera", AppManifest(cat["Camera"][1], cat["Camera"][2]), sensors={CAMERA}),
            AppSpec(
                "Navigator",
                AppManifest(cat["Navigator"][1], cat["Navigator"][2]),
                network=True,
                raw_feed=True,
                net_destinations=(F.MAP_ADDR,),
            ),
            AppSpec(
                "FleetUplink",
                AppManifest(cat["FleetUplink"][1], {P.CAM_TOPIC}),
                network=True,
                net_destinations=(F.CLOUD_ADDR,),
            ),
            AppSpec(
                "BlurFilter",
                AppManifest(cat["BlurFilter"][1], cat["BlurFilter"][2]),
                network=True,
                net_destinations=(F.MAP_ADDR,),
            ),
        ]
    )


def setup_blur_pipeline(fx):
    fx.launch("Camera")
    # instance order matters: the first blur process binds to the primary node
    fx.launch("BlurFilter", {"in_topic": P.CAM_TOPIC})
    fx.launch("BlurFilter", {"in_topic": P.NAV_TOPIC, "egress": F.MAP_ADDR})
    fx.launch("Navigator", {"map_address": F.MAP_ADDR})
    fx.launch("FleetUplink", {"addresses": (F.CLOUD_ADDR,)})
    _step0(fx)
    _enforce(fx, compile_policy(HighLevelPolicy.blur_exported_images("BlurFilter"), blur_inventory()))

    def checks(fx, res):
        uplink = [p for p in fx.refmon.network_log if p.src == "FleetUplink"]
        nav_egress = [p for p in fx.refmon.network_log if p.src.startswith("BlurFilter")]
        res.details["uplink_frames"] = len(uplink)
        res.details["blurred_map_frames"] = len(nav_egress)
        if fx.mode is not FULL:
            return {}
        blurred = all(P.decode_frame(p.payload) is not None for p in uplink)
        return {
            "uplink_gets_blurred_frames": bool(uplink) and blurred,
            "navigator_egress_via_blur_instance": bool(nav_egress),
            "two_blur_instances": len(fx.runtime.pids_of("BlurFilter")) == 2
            and {fx.runtime.node_of(p) for p in fx.runtime.pids_of("BlurFilter")}
            == {"BlurFilter@1", "BlurFilter@2"},
        }

    return checks


def lane_inventory() -> AppInventory:
    cat = F.APP_CATALOG
    return AppInventory.of(
        [
            AppSpec("GpsReader", AppManifest(cat["GpsReader"][1], cat["GpsReader"][2]), sensors={GPS}),
            AppSpec(
                "Telemetry",
                AppManifest(cat["Telemetry"][1], {P.POSITION_TOPIC}),
                network=True,
                net_destinations=(F.TELEMETRY_ADDR,),
            ),
            AppSpec("TrustedLogger", AppManifest(cat["TrustedLogger"][1], cat["TrustedLogger"][2])),
        ]
    )


def setup_drone_lane_log(fx):
    fx.launch("GpsReader")
    fx.launch("TrustedLogger")
    fx.launch("Telemetry", {"address": F.TELEMETRY_ADDR})
    _step0(fx)
    _enforce(fx, compile_policy(HighLevelPolicy.use_drone_lanes("TrustedLogger"), lane_inventory()))

    def checks(fx, res):
        lane = fx.refmon.sink_log.get(TAMPERLOG, [])
        res.details["lane_log_entries"] = len(lane)
        if fx.mode is not FULL:
            return {}
        return {"fixes_logged_to_tamper_log": bool(lane)}

    return checks


SCENARIOS = {
    s.name: s
    for s in (
        Scenario(
            "certificate-check",
            "forged certificate and unlisted topic subscription",
            setup_certificate_check,
            {NONE: LEAK, MANIFEST: BLOCKED, FULL: BLOCKED},
        ),
        Scenario(
            "binary-swap",
            "malicious binary presented under a benign identity",
            setup_binary_swap,
            {NONE: LEAK, MANIFEST: LEAK, FULL: BLOCKED},
        ),
        Scenario(
            "scrub-redirection",
            "status flow redirected through a single-byte rate-limited scrubber",
            setup_scrub_redirection,
            {NONE: LEAK, MANIFEST: LEAK, FULL: BLOCKED},
            duration_us=25 * P.SECOND,
        ),
        Scenario(
            "direct-os-channel",
            "local socket straight to the camera, bypassing pub/sub",
            setup_direct_os_channel,
            {NONE: LEAK, MANIFEST: LEAK, FULL: BLOCKED},
        ),
        Scenario(
            "net-whitelist",
            "uplink sends to the fleet coordinator and to an unlisted host",
            setup_net_whitelist,
            {NONE: LEAK, MANIFEST: LEAK, FULL: BLOCKED},
            trusted_destinations=frozenset({F.FLEET_ADDR}),
        ),
        Scenario(
            "blur-pipeline",
            "network egress of camera data only through blur instances",
            setup_blur_pipeline,
            {NONE: LEAK, MANIFEST: LEAK, FULL: BLOCKED},
        ),
        Scenario(
            "drone-lane-log",
            "GPS output logged by a trusted logger, receipts downstream",
            setup_drone_lane_log,
            {NONE: LEAK, MANIFEST: LEAK, FULL: BLOCKED},
            sentinel=P.GPS_SENTINEL,
        ),
    )
}


def builtin_scenarios() -> dict:
    return dict(SCENARIOS)


def find_leaks(fx, scenario: Scenario) -> list:
    windows = P.sentinel_windows(scenario.sentinel)
    leaks = []
    for p in fx.refmon.network_log:
        if p.address in scenario.trusted_destinations:
            continue
        if P.contains_sentinel(p.payload, windows):
            leaks.append((NETWORK, p.address, p.src, p.time))
    for path, f in fx.refmon.files.items():
        if P.contains_sentinel(bytes(f.data), windows):
            leaks.append((FILESYSTEM, path, f.label.creator, None))
    return leaks


def sink_transcript(fx, scenario: Scenario) -> list:
    """Hex dump of everything that left through an untrusted sink."""
    lines = []
    for p in fx.refmon.network_log:
        if p.address not in scenario.trusted_destinations:
            lines.append(f"net {p.address} {p.payload.hex()}")
    for path, f in sorted(fx.refmon.files.items()):
        lines.append(f"file {path} {bytes(f.data).hex()}")
    return lines


def oracle_leak(sink_hex: list, sentinel: bytes) -> bool:
    """Independent check: grep the hex transcript for any sentinel window."""
    ring = sentinel.hex() * 2
    for i in range(0, len(sentinel) * 2, 2):
        needle = ring[i : i + 2 * P.WINDOW]
        for line in sink_hex:
            payload = line.rsplit(" ", 1)[-1]
            if any(m.start() % 2 == 0 for m in re.finditer(needle, payload)):
                return True
    return False


def run_scenario(name: str, mode) -> ScenarioResult:
    try:
        sc = SCENARIOS[name]
    except KeyError:
        raise UnknownScenario(name) from None
    mode = EnforcementMode(mode)
    fx = F.Fixture(mode)
    checker = sc.setup(fx)
    fx.runtime.run_for(sc.duration_us)
    leaks = find_leaks(fx, sc)
    outcome = LEAK if leaks else BLOCKED
    res = ScenarioResult(
        sc.name, mode, outcome, sc.expect[mode], leaks, {}, [], sink_transcript(fx, sc)
    )
    res.checks = checker(fx, res)
    res.transcript = _transcript(fx, leaks)
    return res


def _transcript(fx, leaks) -> list:
    out = list(fx.runtime.transcript)
    for r in fx.refmon.audit_log():
        if r.verdict is Decision.DENY or r.dst in (NETWORK, FILESYSTEM, TAMPERLOG) or r.hook == "connect":
            out.append("audit " + r.to_line())
    for sink, where, src, t in leaks:
        out.append(f"LEAK {sink} {where} from {src} at t={t}")
    return out
