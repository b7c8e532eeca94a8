import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dronemac.errors import UnknownScenario
from dronemac.harness import bench as B
from dronemac.harness import fixtures as F
from dronemac.harness import programs as P
from dronemac.harness import scenarios as S
from dronemac.model import EnforcementMode
from dronemac.policy import extract_graph


def test_sentinels_have_distinct_windows():
    for s in (P.CAMERA_SENTINEL, P.GPS_SENTINEL):
        ring = s + s[:15]
        assert len(s) == 64
        assert all(len(set(ring[i : i + 16])) >= 12 for i in range(64))
    assert not P.sentinel_windows(P.CAMERA_SENTINEL) & P.sentinel_windows(P.GPS_SENTINEL)


def test_pixelation_destroys_every_sentinel_window():
    frame = P.camera_pixels()
    blurred = P.BlurFilter({}).transform(P.encode_frame(1, 64, 64, frame))
    assert blurred is not None
    assert not P.contains_sentinel(blurred, P.sentinel_windows(P.CAMERA_SENTINEL))
    assert P.contains_sentinel(frame, P.sentinel_windows(P.CAMERA_SENTINEL))


@settings(max_examples=100)
@given(st.binary(max_size=200), st.integers(0, 63), st.binary(max_size=50))
def test_oracle_leak_agrees_with_window_search(prefix, offset, suffix):
    s = P.CAMERA_SENTINEL
    window = (s + s)[offset : offset + 16]
    payload = prefix + window + suffix
    assert S.oracle_leak([f"net x {payload.hex()}"], s)
    clean = prefix + suffix
    assert S.oracle_leak([f"net x {clean.hex()}"], s) == P.contains_sentinel(
        clean, P.sentinel_windows(s)
    )


def test_oracle_leak_ignores_odd_nibble_alignment():
    s = P.CAMERA_SENTINEL
    shifted = "0" + (s[:16]).hex() + "0"
    assert not S.oracle_leak([f"net x {shifted}"], s)


def test_frames_roundtrip():
    f = P.encode_frame(7, 4, 2, b"abcdefgh")
    assert P.decode_frame(f) == (7, 4, 2, b"abcdefgh")
    assert P.frame_seq(f) == 7
    assert P.decode_frame(b"junk") is None
    assert P.decode_frame(f[:-1]) is None


def test_images_select_program_by_content():
    img = P.make_image("BadCameraStatus", salt=b"x")
    assert P.program_name(img) == "BadCameraStatus"
    assert isinstance(P.load_program(img, {}), P.BadCameraStatus)
    assert P.load_program(b"not an image", {}) is None


def test_fixture_is_deterministic():
    a, b = F.Fixture(), F.Fixture()
    assert a.tee.public_key == b.tee.public_key
    assert a.identity("Camera") == b.identity("Camera")
    assert a.image("Camera") != a.image("CameraStatus")


def test_unknown_scenario():
    with pytest.raises(UnknownScenario):
        S.run_scenario("nope", EnforcementMode.FULL)


@pytest.mark.parametrize("name", sorted(S.SCENARIOS))
def test_scenario_results_are_reproducible(name):
    r1 = S.run_scenario(name, EnforcementMode.FULL)
    r2 = S.run_scenario(name, EnforcementMode.FULL)
    assert r1.transcript == r2.transcript
    assert r1.sink_hex == r2.sink_hex


def test_leak_detector_agrees_with_hex_oracle_everywhere():
    for name, sc in S.SCENARIOS.items():
        for mode in S.MODES:
            res = S.run_scenario(name, mode)
            assert bool(res.leaks) == S.oracle_leak(res.sink_hex, sc.sentinel), (name, mode)


def test_scrub_redirection_rate_limit():
    res = S.run_scenario("scrub-redirection", EnforcementMode.FULL)
    assert res.checks == {"status_byte_delivered": True, "rate_limited": True}
    assert res.details["status_bytes"] == 3  # 25 s run, one byte per 10 s


def test_platform_graph_shape():
    g = F.platform_graph()
    assert (len(g.nodes), len(g.edges)) == (29, 69)


def test_platform_run_exercises_every_edge():
    fx = F.Fixture(EnforcementMode.FULL)
    pids = F.launch_platform(fx)
    assert all(pids.values())
    fx.runtime.run_for(2 * P.SECOND)
    got = extract_graph(fx.refmon.audit_log()).accept()
    assert got.edges == F.platform_graph().edges


def test_bench_counts_and_overhead_fields():
    s = B.bench("range", "full", reps=2, count=5)
    assert s.delivered == [5, 5]
    assert s.overhead_vs_none is not None
    d = s.summary()
    assert d["kind"] == "bench" and d["workload"] == "range"
    with pytest.raises(KeyError):
        B.bench("nope", "full")


def test_redirect_variants_deliver_same_frames():
    out = B.redirect_suite(EnforcementMode.FULL, reps=1, count=5)
    assert [s.workload for s in out] == ["redirect-direct", "redirect-null", "redirect-blur"]
    assert {tuple(s.delivered) for s in out} == {(5,)}
    assert out[0].overhead_vs_none == 0.0
