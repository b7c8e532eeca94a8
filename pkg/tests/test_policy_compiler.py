import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dronemac.errors import UnresolvedTrustedApp
from dronemac.model import (
    CAMERA,
    FILESYSTEM,
    GPS,
    NETWORK,
    TAMPERLOG,
    AppManifest,
    Edge,
    TopicKey,
)
from dronemac.policy import (
    AppInventory,
    AppSpec,
    HighLevelPolicy,
    base_graph,
    compile_policy,
)

from oracles import brute_reachable


def app(name, pub=(), sub=(), sensors=(), network=False, files=False, raw=False, dest=()):
    return AppSpec(name, AppManifest(frozenset(pub), frozenset(sub)), frozenset(sensors), network, files, raw, dest)


def reach(g, s, t, avoid=()):
    edges = [(e.src, e.dst, e.key) for e in g.edges]
    return brute_reachable(g.nodes, edges, s, t, avoid)


INV = AppInventory.of(
    [
        app("Camera", pub={"img"}, sensors={CAMERA}),
        app("Detector", pub={"det"}, sub={"img"}, raw=True),
        app("Uplink", sub={"det", "blurred"}, network=True, dest=("up:443",)),
        app("Weather", pub={"wx"}, network=True, dest=("wx:443",)),
        app("Recorder", sub={"img"}, files=True),
        app("BlurFilter", pub={"blurred"}, sub={"img"}, raw=True),
    ]
)


def test_base_graph_from_inventory():
    g = base_graph(INV)
    assert {CAMERA, GPS, NETWORK, FILESYSTEM, TAMPERLOG} <= set(g.nodes)
    assert Edge("Camera", "Detector", TopicKey("img")) in g.edges
    assert Edge(CAMERA, "Camera") in g.edges
    assert Edge("Uplink", NETWORK) in g.edges
    assert g.net_whitelist == {"up:443", "wx:443"}
    assert reach(g, CAMERA, NETWORK)


def test_process_locally_cuts_camera_taint_only():
    g = compile_policy(HighLevelPolicy.process_locally(), INV)
    assert not reach(g, CAMERA, NETWORK) and not reach(g, CAMERA, FILESYSTEM)
    # untainted network use survives, as do local flows
    assert Edge("Weather", NETWORK) in g.edges
    assert Edge("Camera", "Detector", TopicKey("img")) in g.edges
    assert g.net_whitelist == {"wx:443"}


def test_blur_routes_egress_through_instances():
    g = compile_policy(HighLevelPolicy.blur_exported_images(), INV)
    blur = set(g.trusted)
    assert blur and all(n.startswith("BlurFilter") for n in blur)
    assert not reach(g, CAMERA, NETWORK, blur)
    assert reach(g, CAMERA, NETWORK)  # still possible through the declassifier
    # raw consumer keeps its raw edge
    assert Edge("Camera", "Detector", TopicKey("img")) in g.edges


def test_blur_dual_instance_for_network_facing_raw_consumer():
    inv = AppInventory.of(
        [
            app("Camera", pub={"img"}, sensors={CAMERA}),
            app("Tracker", sub={"img"}, raw=True, network=True, dest=("t:1",)),
            app("BlurFilter", pub={"blurred"}, sub={"img"}, raw=True),
        ]
    )
    g = compile_policy(HighLevelPolicy.blur_exported_images(), inv)
    assert g.trusted == {"BlurFilter@1", "BlurFilter@2"}
    assert Edge("Tracker", NETWORK) not in g.edges
    assert Edge("BlurFilter@2", NETWORK) in g.edges
    assert reach(g, "Tracker", NETWORK)
    assert not reach(g, CAMERA, NETWORK, g.trusted)


def test_blur_requires_declassifier_in_inventory():
    inv = AppInventory.of([app("Camera", sensors={CAMERA})])
    with pytest.raises(UnresolvedTrustedApp):
        compile_policy(HighLevelPolicy.blur_exported_images(), inv)


def test_drone_lanes_routes_gps_output_through_logger():
    inv = AppInventory.of(
        [
            app("Gps", pub={"pos"}, sensors={GPS}),
            app("Telemetry", sub={"pos", "receipt"}, network=True, dest=("tm:443",)),
            app("TrustedLogger", pub={"receipt"}, sub={"pos"}, files=True),
        ]
    )
    g = compile_policy(HighLevelPolicy.use_drone_lanes(), inv)
    assert g.trusted == {"TrustedLogger"}
    assert Edge("Gps", "Telemetry", TopicKey("pos")) not in g.edges
    assert Edge("Gps", "TrustedLogger", TopicKey("pos")) in g.edges
    assert Edge("TrustedLogger", "Telemetry", TopicKey("receipt")) in g.edges
    assert Edge("TrustedLogger", TAMPERLOG) in g.edges
    assert Edge("TrustedLogger", FILESYSTEM) not in g.edges
    assert not reach(g, GPS, "Telemetry", {"TrustedLogger"})


def test_inventory_rejects_duplicates_and_unknown_sensors():
    with pytest.raises(ValueError):
        AppInventory.of([app("A"), app("A")])
    with pytest.raises(ValueError):
        app("A", sensors={"LIDAR"})


# -- randomized soundness over arbitrary topic topologies --------------------


@st.composite
def inventories(draw, with_blur=False):
    topics = ["t0", "t1", "t2", "t3"]
    n = draw(st.integers(0, 7))
    apps = []
    for i in range(n):
        apps.append(
            app(
                f"a{i}",
                pub=draw(st.sets(st.sampled_from(topics), max_size=2)),
                sub=draw(st.sets(st.sampled_from(topics), max_size=2)),
                sensors=draw(st.sets(st.sampled_from([CAMERA, GPS]))),
                network=draw(st.booleans()),
                files=draw(st.booleans()),
                raw=draw(st.booleans()),
                dest=("d:1",),
            )
        )
    if with_blur:
        apps.append(
            app(
                "BlurFilter",
                pub=draw(st.sets(st.sampled_from(topics), min_size=1, max_size=2)),
                sub=draw(st.sets(st.sampled_from(topics), min_size=1, max_size=2)),
                network=draw(st.booleans()),
                raw=True,
            )
        )
    return AppInventory.of(apps)


@settings(max_examples=300, deadline=None)
@given(inventories())
def test_process_locally_sound_random_topologies(inv):
    g = compile_policy(HighLevelPolicy.process_locally(), inv)
    assert not reach(g, CAMERA, NETWORK) and not reach(g, CAMERA, FILESYSTEM)
    # apps unreachable from the camera keep their sinks
    base = base_graph(inv)
    for a in inv.apps:
        if a.network and not reach(base, CAMERA, a.name):
            assert Edge(a.name, NETWORK) in g.edges


@settings(max_examples=300, deadline=None)
@given(inventories(with_blur=True))
def test_blur_sound_random_topologies(inv):
    g = compile_policy(HighLevelPolicy.blur_exported_images(), inv)
    assert g.trusted and not reach(g, CAMERA, NETWORK, g.trusted)


def test_compile_is_deterministic():
    rng = random.Random(3)
    for _ in range(20):
        apps = [
            app(f"a{i}", pub={rng.choice("xyz")}, sub={rng.choice("xyz")}, sensors={CAMERA} if rng.random() < 0.3 else (), network=rng.random() < 0.5)
            for i in range(5)
        ]
        inv = AppInventory.of(apps)
        assert compile_policy(HighLevelPolicy.process_locally(), inv) == compile_policy(
            HighLevelPolicy.process_locally(), AppInventory.of(reversed(apps))
        )
