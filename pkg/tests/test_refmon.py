import pytest
from hypothesis import given
from hypothesis import strategies as st

from dronemac.errors import AuditParseError, InvalidGraph, NoSuchFile, PermissionDenied
from dronemac.model import (
    ALLOW,
    CAMERA,
    DENY,
    FILESYSTEM,
    NETWORK,
    TAMPERLOG,
    CommunicationGraph,
    Edge,
    NodeKind,
    TopicKey,
)
from dronemac.refmon import AuditRecord, ReferenceMonitor, parse_audit


def monitor(graph=None, **procs):
    km = ReferenceMonitor()
    for pid, name in procs.items():
        km.register_process(int(pid[1:]), name)
    if graph is not None:
        km.load_policy(graph)
    return km


G = CommunicationGraph.build(
    [CAMERA, NETWORK, FILESYSTEM, TAMPERLOG, "Cam", "Status", "Logger"],
    [
        (CAMERA, "Cam"),
        ("Cam", "Status", "cam::status"),
        ("Status", NETWORK),
        ("Cam", FILESYSTEM),
        ("Logger", FILESYSTEM),
        ("Logger", "Cam"),
        ("Logger", TAMPERLOG),
    ],
    net_whitelist=["ok.example:443"],
)


def test_no_policy_allows_everything():
    km = monitor(p1="Cam", p2="Status")
    assert km.hook_connect(1, 2).allowed
    assert km.net_send(1, "anywhere:1", b"x").allowed


def test_enforcement_off_allows_even_with_policy():
    km = ReferenceMonitor(enforcing=False)
    km.register_process(1, "Status")
    km.register_process(2, "Cam")
    km.load_policy(G)
    assert km.hook_connect(1, 2).allowed


def test_connect_respects_edge_direction_and_key():
    km = monitor(G, p1="Cam", p2="Status")
    assert km.hook_connect(1, 2, key=TopicKey("cam", "status")).allowed
    assert not km.hook_connect(1, 2, key=TopicKey("cam", "image")).allowed
    assert not km.hook_connect(2, 1, key=TopicKey("cam", "status")).allowed


def test_network_needs_edge_and_whitelisted_address():
    km = monitor(G, p1="Cam", p2="Status")
    assert km.net_send(2, "ok.example:443", b"a").allowed
    assert not km.net_send(2, "evil.example:80", b"b").allowed
    assert not km.net_send(1, "ok.example:443", b"c").allowed
    assert [p.payload for p in km.network_log] == [b"a"]


def test_sensor_and_sink_hooks():
    km = monitor(G, p1="Cam", p2="Status", p3="Logger")
    km.devices[CAMERA] = lambda: b"pixels"
    assert km.read_sensor(1, CAMERA) == b"pixels"
    with pytest.raises(PermissionDenied):
        km.read_sensor(2, CAMERA)
    assert km.write_sink(3, TAMPERLOG, b"log").allowed
    assert not km.write_sink(1, TAMPERLOG, b"log").allowed
    assert km.sink_log[TAMPERLOG] == [(0, "Logger", b"log")]


def test_file_label_is_creator_and_reads_follow_creator_edge():
    km = monitor(G, p1="Cam", p2="Status", p3="Logger")
    km.create_file(1, "/img")
    km.write_file(1, "/img", b"raw")
    assert km.file_creator("/img") == "Cam"
    # Cam -> Status exists only for a topic key, not for file data
    with pytest.raises(PermissionDenied):
        km.read_file(2, "/img")
    with pytest.raises(PermissionDenied):
        km.create_file(2, "/s")
    with pytest.raises(NoSuchFile):
        km.read_file(1, "/missing")


def test_file_write_by_non_creator_needs_edge_to_creator():
    km = monitor(G, p1="Cam", p3="Logger")
    km.create_file(1, "/img")
    # Logger -> FILESYSTEM and Logger -> Cam both exist
    km.write_file(3, "/img", b"x")
    km.create_file(3, "/log")
    with pytest.raises(PermissionDenied):
        km.write_file(1, "/log", b"y")  # no Cam -> Logger edge


def test_file_export_import_preserves_labels():
    km = monitor(G, p1="Cam")
    km.create_file(1, "/img")
    km.write_file(1, "/img", b"abc")
    saved = km.export_files()
    km2 = monitor(G, p1="Cam", p2="Status")
    km2.import_files(saved)
    assert km2.file_creator("/img") == "Cam"
    assert km2.read_file(1, "/img") == b"abc"


def test_shm_mq_pipe_directions():
    g = CommunicationGraph.build(["A", "B"], [("A", "B")])
    km = monitor(g, p1="A", p2="B")
    shm = km.shm_create(1, 4)
    km.shm_write(1, shm, b"data")
    km.shm_attach(2, shm)  # reader attaches to the writer's segment: A -> B
    assert km.shm_read(2, shm) == b"data"
    shm_b = km.shm_create(2, 4)
    with pytest.raises(PermissionDenied):
        km.shm_attach(1, shm_b)

    mq = km.mq_create(2)  # queue owned by the receiver
    assert km.mq_send(1, mq, b"m").allowed
    assert km.mq_receive(2, mq) == [b"m"]
    mq_a = km.mq_create(1)
    assert not km.mq_send(2, mq_a, b"m").allowed

    pipe = km.pipe_create(1)
    km.pipe_connect(2, pipe)
    km.pipe_write(1, pipe, b"p")
    assert km.pipe_read(2, pipe) == [b"p"]
    pipe_b = km.pipe_create(2)
    with pytest.raises(PermissionDenied):
        km.pipe_connect(1, pipe_b)


def test_datagram_queued_until_bind_then_mediated():
    g = CommunicationGraph.build(["A", "B", "C"], [("A", "B")])
    km = monitor(g, p1="A", p2="B", p3="C")
    assert km.sendto(1, 9000, b"early") is None
    assert km.bind(2, 9000) == [b"early"]
    assert km.sendto(1, 9000, b"late").allowed
    assert km.recvfrom(2, 9000) == [b"early", b"late"]
    assert not km.sendto(3, 9000, b"nope").allowed
    assert km.recvfrom(2, 9000) == []


def test_load_policy_tears_streams_that_became_illegal():
    km = monitor(p1="A", p2="B")
    obj = km.connect(1, 2)
    km.stream_send(1, obj, b"hello")
    rec = km.load_policy(CommunicationGraph.build(["A", "B"]))
    assert obj.object_id in rec.torn
    assert not obj.open
    assert km.stream_recv(2, obj) == []
    with pytest.raises(PermissionDenied):
        km.stream_send(1, obj, b"again")


def test_load_policy_keeps_legal_streams_and_bumps_version():
    km = monitor(p1="A", p2="B")
    obj = km.connect(1, 2)
    v0 = km.graph_version
    rec = km.load_policy(CommunicationGraph.build(["A", "B"], [("A", "B")]))
    assert rec.torn == ()
    assert obj.open
    assert km.graph_version == rec.graph_version > v0


def test_load_rejects_invalid_graph_and_keeps_old():
    km = monitor(G)
    old = km.graph_version
    bad = CommunicationGraph({"A": NodeKind.APP}, {Edge("A", "Ghost")})
    with pytest.raises(InvalidGraph):
        km.load_policy(bad)
    assert km.graph is G and km.graph_version == old


def test_instances_bind_in_pid_order():
    g = CommunicationGraph.build(["Blur@1", "Blur@2", NETWORK], [("Blur@2", NETWORK)], ["Blur@1", "Blur@2"])
    km = monitor(g, p5="Blur", p3="Blur")
    assert km.node_of(3) == "Blur@1"
    assert km.node_of(5) == "Blur@2"
    assert km.net_send(5, "x", b"").decision is DENY  # no whitelist
    g2 = CommunicationGraph.build(["Blur@1", "Blur@2", NETWORK], [("Blur@2", NETWORK)], ["Blur@2"], ["x"])
    km.load_policy(g2)
    assert km.net_send(5, "x", b"").decision is ALLOW
    assert km.net_send(3, "x", b"").decision is DENY


def test_decision_cache_is_per_version():
    km = monitor(G, p1="Cam", p2="Status")
    km.hook_connect(1, 2, key=TopicKey("cam", "status"))
    km.hook_connect(1, 2, key=TopicKey("cam", "status"))
    assert km.cache_hits == 1
    km.unload_policy()
    assert km.hook_connect(2, 1).allowed


def test_every_hook_is_audited():
    km = monitor(G, p1="Cam", p2="Status")
    km.hook_connect(1, 2, key=TopicKey("cam", "status"))
    km.net_send(2, "evil:1", b"")
    recs = km.audit_log()
    assert [(r.hook, r.src, r.dst, r.key, r.verdict) for r in recs] == [
        ("connect", "Cam", "Status", "cam::status", ALLOW),
        ("send", "Status", NETWORK, "@evil:1", DENY),
    ]
    assert parse_audit(km.export_audit()) == list(recs)


_text = st.text(alphabet="abcXYZ_@:./-0123456789", min_size=1, max_size=12)


@given(
    st.integers(0, 10**12),
    st.sampled_from(["connect", "send", "device", "sink", "file_write"]),
    _text,
    _text,
    st.one_of(st.none(), _text),
    st.sampled_from(["local-stream", "file", "device"]),
    st.sampled_from([ALLOW, DENY]),
    st.integers(0, 1000),
)
def test_audit_line_roundtrip(t, hook, src, dst, key, abst, verdict, version):
    rec = AuditRecord(t, hook, src, dst, key if key != "-" else None, abst, verdict, version)
    assert AuditRecord.from_line(rec.to_line()) == rec


def test_audit_parse_errors_carry_line_numbers():
    with pytest.raises(AuditParseError) as exc:
        parse_audit("0\tconnect\tA\tB\t-\tlocal-stream\tALLOW\t1\nbroken line\n")
    assert exc.value.line == 2
