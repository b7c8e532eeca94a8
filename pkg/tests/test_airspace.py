import json
import random

import pytest

from dronemac import crypto
from dronemac.airspace import (
    Authority,
    EventKind,
    GeoPolygon,
    GeofenceMonitor,
    PermissionArtifact,
    PlanVerdict,
    diff_events,
    intersects,
    parse_polygon,
)
from dronemac.errors import (
    EncodingError,
    InvalidPolygon,
    NoArtifact,
    PolicySyntaxError,
    SignatureInvalid,
    UnknownDrone,
)
from dronemac.harness import fixtures as F
from dronemac.model import CAMERA, NETWORK, CommunicationGraph, EnforcementMode, TopicKey
from dronemac.policy import serialize_policy

from oracles import random_simple_polygon


def box(x0, y0, x1, y1):
    return GeoPolygon(((x0, y0), (x0, y1), (x1, y1), (x1, y0)))


DRONE = crypto.Ed25519Scheme().keypair(b"test-drone").public


# -- geometry ----------------------------------------------------------------


def test_polygon_validation():
    with pytest.raises(InvalidPolygon):
        GeoPolygon(((0, 0), (1, 1)))
    with pytest.raises(InvalidPolygon):
        GeoPolygon(((0, 0), (2, 2), (2, 0), (0, 2)))
    with pytest.raises(InvalidPolygon):
        GeoPolygon(((0, 0), (0, float("nan")), (1, 0)))
    with pytest.raises(InvalidPolygon):
        GeoPolygon((("a", 0), (0, 1), (1, 0)))


def test_parse_polygon_text():
    p = parse_polygon("# campus\n12.0 77.0\n12.0, 77.5\n\n12.5 77.5  # corner\n")
    assert p.vertices == ((12.0, 77.0), (12.0, 77.5), (12.5, 77.5))
    assert parse_polygon(p.to_text()) == p
    with pytest.raises(InvalidPolygon, match="line 2"):
        parse_polygon("1 2\n3\n4 5\n")
    with pytest.raises(InvalidPolygon, match="line 1"):
        parse_polygon("one two\n")


def test_contains_is_boundary_inclusive():
    b = box(0, 0, 1, 1)
    assert b.contains(0.5, 0.5) and b.contains(0, 0.5) and b.contains(1, 1)
    assert not b.contains(1.0000001, 0.5)


def _mc_overlap(a, b, rng, samples=4000):
    """Monte-Carlo witness search inside the bbox intersection."""
    a0, a1, a2, a3 = a.bbox()
    b0, b1, b2, b3 = b.bbox()
    lo_x, lo_y, hi_x, hi_y = max(a0, b0), max(a1, b1), min(a2, b2), min(a3, b3)
    if lo_x > hi_x or lo_y > hi_y:
        return False
    for _ in range(samples):
        x, y = rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)
        if a.contains(x, y) and b.contains(x, y):
            return True
    return False


def test_intersects_against_monte_carlo_witnesses():
    rng = random.Random(5)
    disagreements_possible = 0
    for _ in range(150):
        a = GeoPolygon(tuple(random_simple_polygon(rng, cx=rng.uniform(-1, 1), cy=rng.uniform(-1, 1))))
        b = GeoPolygon(tuple(random_simple_polygon(rng, cx=rng.uniform(-1, 1), cy=rng.uniform(-1, 1))))
        hit = intersects(a, b)
        assert hit == intersects(b, a)
        if _mc_overlap(a, b, rng):
            assert hit  # a witness point proves overlap
        elif hit:
            disagreements_possible += 1  # sliver or boundary contact the sampler missed
    assert disagreements_possible < 15


def test_intersects_matches_shapely():
    shapely = pytest.importorskip("shapely.geometry")
    rng = random.Random(9)
    for _ in range(300):
        a = random_simple_polygon(rng, cx=rng.uniform(-1.5, 1.5), cy=rng.uniform(-1.5, 1.5))
        b = random_simple_polygon(rng, cx=rng.uniform(-1.5, 1.5), cy=rng.uniform(-1.5, 1.5))
        want = shapely.Polygon(a).intersects(shapely.Polygon(b))
        assert intersects(GeoPolygon(tuple(a)), GeoPolygon(tuple(b))) == want


# -- artifact ----------------------------------------------------------------


def _artifact():
    auth = Authority()
    auth.register_host(box(0, 0, 10, 10), F.camera_policy())
    auth.register_drone(DRONE)
    return auth, auth.submit_flight_plan(DRONE, box(1, 1, 5, 5))


def test_artifact_roundtrip_and_signature():
    auth, art = _artifact()
    assert art.approved and art.verify(auth.public_key)
    again = PermissionArtifact.decode(art.encode())
    assert again == art and again.verify(auth.public_key)
    assert not art.verify(Authority(seed=b"other").public_key)


def test_every_byte_mutation_is_detected():
    auth, art = _artifact()
    data = art.encode()
    rng = random.Random(2)
    for i in range(len(data)):
        mutated = bytearray(data)
        mutated[i] ^= 1 << rng.randrange(8)
        try:
            dec = PermissionArtifact.decode(bytes(mutated))
        except (EncodingError, ValueError):
            continue
        assert not dec.verify(auth.public_key), f"byte {i} mutation undetected"


# -- authority ---------------------------------------------------------------


def test_flight_plan_verdicts():
    auth = Authority()
    h1 = auth.register_host(box(0, 0, 10, 10), F.camera_policy())
    h2 = auth.register_host(box(20, 20, 30, 30), F.camera_policy())
    z = auth.register_redzone(box(40, 40, 50, 50))
    with pytest.raises(UnknownDrone):
        auth.submit_flight_plan(DRONE, box(1, 1, 2, 2))
    auth.register_drone(DRONE)
    ok = auth.submit_flight_plan(DRONE, box(5, 5, 25, 25))
    assert ok.verdict is PlanVerdict.APPROVED
    assert [p.host_id for p in ok.policies] == [h1, h2]
    bad = auth.submit_flight_plan(DRONE, box(45, 45, 60, 60))
    assert bad.verdict is PlanVerdict.REJECTED and bad.redzone == z and not bad.policies
    # touching a red zone boundary is an intersection
    edge = auth.submit_flight_plan(DRONE, box(35, 35, 40, 40))
    assert edge.verdict is PlanVerdict.REJECTED


def test_registry_persists_and_replays(tmp_path):
    path = tmp_path / "reg.jsonl"
    auth = Authority(str(path))
    hid = auth.register_host(box(0, 0, 1, 1), F.camera_policy())
    auth.register_redzone(box(5, 5, 6, 6))
    auth.register_drone(DRONE)
    lines = [json.loads(l) for l in path.read_text().splitlines()]
    assert [r["kind"] for r in lines] == ["host", "redzone", "drone"]
    again = Authority(str(path))
    assert set(again.hosts) == {hid}
    assert again.submit_flight_plan(DRONE, box(0.5, 0.5, 2, 2)).approved
    assert again.register_host(box(2, 2, 3, 3), F.camera_policy()) == "host-2"


def test_registry_rejects_bad_records(tmp_path):
    path = tmp_path / "reg.jsonl"
    path.write_text('{"kind": "spaceship"}\n')
    with pytest.raises(ValueError, match="reg.jsonl:1"):
        Authority(str(path))


def test_register_host_rejects_unparseable_policy():
    with pytest.raises(PolicySyntaxError):
        Authority().register_host(box(0, 0, 1, 1), "nodes:\nA bogus\n")


# -- geofence ----------------------------------------------------------------


def test_diff_events_order():
    ev = diff_events({"b", "a", "c"}, {"c", "e", "d"})
    assert [(e.kind, e.host) for e in ev] == [
        (EventKind.EXIT, "a"),
        (EventKind.EXIT, "b"),
        (EventKind.ENTER, "d"),
        (EventKind.ENTER, "e"),
    ]


def _policy(extra_edge):
    nodes = [CAMERA, NETWORK, "Camera", "CameraStatus", "ScrubStatus"]
    edges = [(CAMERA, "Camera"), ("Camera", "ScrubStatus", TopicKey("CameraOutput"))]
    edges.append(extra_edge)
    return CommunicationGraph.build(nodes, edges, ["ScrubStatus"], [F.STATUS_ADDR])


def _monitor(baseline=None):
    auth = Authority()
    auth.register_host(box(0, 0, 10, 10), _policy(("CameraStatus", NETWORK)))
    auth.register_host(box(5, 0, 15, 10), _policy(("ScrubStatus", "CameraStatus")))
    auth.register_drone(DRONE)
    art = auth.submit_flight_plan(DRONE, box(-5, -5, 20, 20))
    fx = F.Fixture(EnforcementMode.FULL)
    fx.launch("Camera")
    fx.launch("ScrubStatus")
    fx.launch("CameraStatus")
    fx.runtime.run_for(0)
    return fx, GeofenceMonitor(fx.runtime, art, auth.public_key, baseline)


def test_geofence_enter_exit_and_intersection():
    fx, mon = _monitor()
    assert fx.refmon.graph is None
    ev = mon.on_gps_update(2, 2)
    assert [str(e) for e in ev] == ["ENTER(host-1)"]
    assert fx.refmon.graph.edges >= {e for e in _policy(("CameraStatus", NETWORK)).edges}
    ev = mon.on_gps_update(7, 5)  # both hosts
    assert [str(e) for e in ev] == ["ENTER(host-2)"]
    g = fx.refmon.graph
    # intersection: neither host-specific edge survives
    assert all(e.dst != NETWORK for e in g.edges)
    assert all(not (e.src == "ScrubStatus" and e.dst == "CameraStatus") for e in g.edges)
    assert mon.on_gps_update(7, 5) == []
    ev = mon.on_gps_update(12, 5)
    assert [str(e) for e in ev] == ["EXIT(host-1)"]
    ev = mon.on_gps_update(18, 18)
    assert [str(e) for e in ev] == ["EXIT(host-2)"]
    assert fx.refmon.graph is None
    assert [a[0] for a in mon.activations] == ["load", "load", "load", "unload"]


def test_geofence_restores_baseline():
    base = CommunicationGraph.build(["Camera"], [])
    fx, mon = _monitor(baseline=base)
    mon.on_gps_update(2, 2)
    mon.on_gps_update(18, 18)
    assert fx.refmon.graph == base


def test_region_exit_freezes_policy_until_reentry():
    fx, mon = _monitor()
    mon.on_gps_update(2, 2)
    version = fx.refmon.graph_version
    ev = mon.on_gps_update(-8, 2)  # outside region and outside host-1
    assert [str(e) for e in ev] == ["EXIT(host-1)", "REGION_EXIT"]
    assert fx.refmon.graph_version == version  # frozen
    ev = mon.on_gps_update(18, 18)
    assert [str(e) for e in ev] == ["REGION_ENTER"]
    assert fx.refmon.graph is None  # catch-up applied on re-entry


def test_monitor_requires_valid_approved_artifact():
    auth = Authority()
    auth.register_drone(DRONE)
    auth.register_redzone(box(0, 0, 1, 1))
    fx = F.Fixture()
    with pytest.raises(NoArtifact):
        GeofenceMonitor(fx.runtime, None, auth.public_key)
    rejected = auth.submit_flight_plan(DRONE, box(0, 0, 2, 2))
    with pytest.raises(NoArtifact):
        GeofenceMonitor(fx.runtime, rejected, auth.public_key)
    ok = auth.submit_flight_plan(DRONE, box(5, 5, 6, 6))
    with pytest.raises(SignatureInvalid):
        GeofenceMonitor(fx.runtime, ok, Authority(seed=b"x").public_key)


def test_issued_policy_text_is_canonical():
    auth, art = _artifact()
    assert art.policies[0].policy_text == serialize_policy(F.camera_policy())
