import pytest

from dronemac import crypto
from dronemac.errors import BadCertificate, DigestMismatch, ManifestDenied, NotAdvertised
from dronemac.middleware import EventLoop, LatencyModel, Program, Runtime
from dronemac.model import AppManifest, CommunicationGraph, EnforcementMode, TopicKey

CA = crypto.CertificateAuthority(b"test-ca")
FULL, MANIFEST, NONE = EnforcementMode.FULL, EnforcementMode.MANIFEST_ONLY, EnforcementMode.NONE


class Recorder(Program):
    def on_message(self, ctx, key, payload):
        self.got = getattr(self, "got", []) + [(ctx.now, key, payload)]


def rt(mode=FULL):
    return Runtime(mode, CA.public_key, loader=lambda image, args: Recorder(args))


def launch(r, name, pubs=(), subs=(), image=None):
    img = image or f"image-of-{name}".encode()
    ident = CA.issue(name, f"image-of-{name}".encode(), AppManifest(frozenset(pubs), frozenset(subs)))
    return r.launch_app(img, ident).pid


def test_event_loop_orders_by_time_then_insertion():
    loop, seen = EventLoop(), []
    loop.call_at(5, seen.append, "b")
    loop.call_at(1, seen.append, "a")
    loop.call_at(5, seen.append, "c")
    loop.run_until(4)
    assert seen == ["a"] and loop.now == 4
    loop.run()
    assert seen == ["a", "b", "c"]


def test_latency_grows_with_payload():
    m = LatencyModel()
    assert m.transfer(0) < m.transfer(1 << 10) < m.transfer(1 << 20)


@pytest.mark.parametrize("mode", [MANIFEST, FULL])
def test_forged_certificate_refused(mode):
    r = rt(mode)
    forged = crypto.CertificateAuthority(b"evil").issue("X", b"img", AppManifest())
    with pytest.raises(BadCertificate):
        r.launch_app(b"img", forged)


def test_forged_certificate_accepted_without_enforcement():
    r = rt(NONE)
    forged = crypto.CertificateAuthority(b"evil").issue("X", b"img", AppManifest())
    assert r.launch_app(b"img", forged).pid


def test_digest_checked_only_in_full():
    for mode in (NONE, MANIFEST):
        assert launch(rt(mode), "A", image=b"other")
    with pytest.raises(DigestMismatch):
        launch(rt(FULL), "A", image=b"other")


def test_manifest_checked_at_registration():
    r = rt(MANIFEST)
    a = launch(r, "A", pubs={"t"})
    with pytest.raises(ManifestDenied):
        r.advertise(a, TopicKey("u", "x"))
    with pytest.raises(ManifestDenied):
        r.subscribe(a, TopicKey("t"))
    r0 = rt(NONE)
    b = launch(r0, "B")
    r0.subscribe(b, TopicKey("anything"))


def _pair(r):
    a = launch(r, "A", pubs={"t"})
    b = launch(r, "B", subs={"t"})
    r.advertise(a, TopicKey("t", "x"))
    r.subscribe(b, TopicKey("t"))
    r.run_for(0)
    return a, b


def test_discovery_connects_matching_pair_and_delivers_in_order():
    r = rt(NONE)
    a, b = _pair(r)
    assert len(r.open_channels()) == 1
    for i in range(3):
        r.publish(a, TopicKey("t", "x"), bytes([i]))
    r.run_for(10_000)
    got = r.procs[b].program.got
    assert [p for _, _, p in got] == [b"\x00", b"\x01", b"\x02"]
    assert all(t > 0 for t, _, _ in got)


def test_publish_requires_advertisement():
    r = rt(NONE)
    a, _ = _pair(r)
    with pytest.raises(NotAdvertised):
        r.publish(a, TopicKey("t", "other"), b"")


def test_type_mismatch_does_not_match():
    r = rt(NONE)
    a = launch(r, "A")
    b = launch(r, "B")
    r.advertise(a, TopicKey("t", "x"))
    r.subscribe(b, TopicKey("t", "y"))
    r.run_for(0)
    assert r.open_channels() == []
    assert r.probe_type("t") == {"x"}


def test_policy_denies_channel_in_full_mode():
    r = rt(FULL)
    a = launch(r, "A", pubs={"t"})
    b = launch(r, "B", subs={"t"})
    r.refmon.load_policy(CommunicationGraph.build(["A", "B"]))
    r.advertise(a, TopicKey("t", "x"))
    r.subscribe(b, TopicKey("t"))
    r.run_for(0)
    assert r.open_channels() == []
    assert r.denied_pairs == [("A", "B", TopicKey("t", "x"))]


def test_policy_not_enforced_in_manifest_mode():
    r = rt(MANIFEST)
    r.refmon.load_policy(CommunicationGraph.build(["A", "B"]))
    _pair(r)
    assert len(r.open_channels()) == 1


def test_loading_policy_mid_run_tears_channel_and_keeps_pids():
    r = rt(FULL)
    a, b = _pair(r)
    r.publish(a, TopicKey("t", "x"), b"in-flight")
    pids = dict(r.procs)
    r.refmon.load_policy(CommunicationGraph.build(["A", "B"]))
    r.run_for(10_000)
    assert r.open_channels() == []
    assert not hasattr(r.procs[b].program, "got")
    assert r.procs == pids and all(r.is_running(p) for p in (a, b))


def test_trusted_interposition_redirects_forbidden_flow():
    r = rt(FULL)
    a = launch(r, "A", pubs={"raw"})
    t = launch(r, "T", pubs={"clean"}, subs={"raw"})
    b = launch(r, "B", subs={"raw", "clean"})
    r.refmon.load_policy(
        CommunicationGraph.build(
            ["A", "T", "B"], [("A", "T", "raw"), ("T", "B", "clean")], trusted=["T"]
        )
    )
    r.advertise(a, TopicKey("raw", "x"))
    r.advertise(t, TopicKey("clean", "x"))
    r.subscribe(t, TopicKey("raw"))
    r.subscribe(b, TopicKey("raw"))
    r.run_for(0)
    pairs = {(c.publisher, c.subscriber, c.key.topic) for c in r.open_channels()}
    assert pairs == {(a, t, "raw"), (t, b, "clean")}
    assert all(c.injected for c in r.open_channels() if c.subscriber == b)


def test_untrusted_node_is_never_an_interposer():
    r = rt(FULL)
    a = launch(r, "A", pubs={"raw"})
    t = launch(r, "T", pubs={"clean"}, subs={"raw"})
    b = launch(r, "B", subs={"raw"})
    r.refmon.load_policy(
        CommunicationGraph.build(["A", "T", "B"], [("A", "T", "raw"), ("T", "B", "clean")])
    )
    r.advertise(a, TopicKey("raw", "x"))
    r.advertise(t, TopicKey("clean", "x"))
    r.subscribe(t, TopicKey("raw"))
    r.subscribe(b, TopicKey("raw"))
    r.run_for(0)
    assert {(c.publisher, c.subscriber) for c in r.open_channels()} == {(a, t)}


def test_stop_app_tears_its_channels():
    r = rt(NONE)
    a, b = _pair(r)
    r.stop_app(b)
    assert r.open_channels() == []
    assert r.publish(a, TopicKey("t", "x"), b"") == 0


def test_runs_are_deterministic():
    def once():
        r = rt(FULL)
        a, b = _pair(r)
        for i in range(5):
            r.loop.call_later(i * 100, r.publish, a, TopicKey("t", "x"), bytes(i * 50))
        r.run_for(10_000)
        return r.transcript, r.latencies, r.procs[b].program.got

    assert once() == once()
