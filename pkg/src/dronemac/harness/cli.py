"""Command-line entry point.

Exit status: 0 when every result matches its expectation, 1 on a mismatch
(or an input that fails validation), 2 on a usage error.  ``--json`` prints
one JSON object per result instead of the human transcript.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from .. import crypto
from ..airspace import Authority, PermissionArtifact, parse_polygon
from ..attest import AttestationReport, Verifier
from ..errors import DroneMacError, PolicySyntaxError, UnknownScenario
from ..model import AppManifest, EnforcementMode
from ..policy import (
    AppInventory,
    AppSpec,
    HighLevelPolicy,
    compile_policy,
    extract_graph,
    parse_policy,
    serialize_policy,
)
from . import bench as B
from . import fixtures as F
from . import scenarios as S

log = logging.getLogger("dronemac")

OK, MISMATCH, USAGE = 0, 1, 2

ATTESTED_APPS = ("Camera", "ScrubStatus", "CameraStatus")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE, f"{self.prog}: error: {message}\n")


class Output:
    def __init__(self, as_json: bool, stream=None):
        self.as_json = as_json
        self.stream = stream or sys.stdout

    def result(self, obj: dict, text: str):
        if self.as_json:
            print(json.dumps(obj, sort_keys=True, default=_jsonable), file=self.stream)
        else:
            print(text, file=self.stream)

    def line(self, text: str):
        if not self.as_json:
            print(text, file=self.stream)


def _jsonable(o):
    if isinstance(o, bytes):
        return o.hex()
    if hasattr(o, "value"):
        return o.value
    return str(o)


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: Optional[str], data, out: Output):
    if path is None or path == "-":
        if isinstance(data, bytes):
            sys.stdout.buffer.write(data)
            sys.stdout.flush()
        elif not out.as_json:
            sys.stdout.write(data)
        return
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(path, mode) as fh:
        fh.write(data)


def _hex(s: str, what: str) -> bytes:
    try:
        return bytes.fromhex(s)
    except ValueError:
        raise UsageError(f"{what} must be hex") from None


# -- scenarios and benchmarks ---------------------------------------------


def cmd_scenarios(args, out: Output) -> int:
    for name, sc in S.builtin_scenarios().items():
        expect = {m.value: o.value for m, o in sc.expect.items()}
        out.result(
            {"kind": "scenario-info", "scenario": name, "title": sc.title, "expect": expect},
            f"{name:20s} {sc.title}  "
            + " ".join(f"{m}={o}" for m, o in expect.items()),
        )
    return OK


def cmd_run(args, out: Output) -> int:
    names = list(S.SCENARIOS) if args.scenario == "all" else [args.scenario]
    modes = list(S.MODES) if args.mode == "all" else [EnforcementMode(args.mode)]
    status = OK
    for name in names:
        for mode in modes:
            try:
                res = S.run_scenario(name, mode)
            except UnknownScenario:
                raise UsageError(f"unknown scenario {name!r}; try 'dronemac scenarios'") from None
            if args.transcript:
                for line in res.transcript:
                    out.line(f"  {line}")
            verdict = "ok" if res.ok else "MISMATCH"
            failed = [k for k, v in res.checks.items() if not v]
            extra = f" failed checks: {', '.join(failed)}" if failed else ""
            out.result(
                res.summary(),
                f"{name} [{mode.value}] outcome={res.outcome.value} "
                f"expected={res.expected.value} {verdict}{extra}",
            )
            if not res.ok:
                status = MISMATCH
    return status


def cmd_bench(args, out: Output) -> int:
    mode = EnforcementMode(args.mode)
    if args.workload == "redirect":
        results = B.redirect_suite(mode, args.reps, args.count)
        ordered = results[0].median_latency_us < results[1].median_latency_us
    else:
        if args.workload not in B.WORKLOADS:
            raise UsageError(f"unknown workload {args.workload!r}; choose from {', '.join(B.WORKLOADS)} or redirect")
        results = [B.bench(args.workload, mode, args.reps, args.count)]
        ordered = mode is EnforcementMode.NONE or results[0].overhead_vs_none >= 0
    status = OK if ordered else MISMATCH
    for s in results:
        conserved = len(set(s.delivered)) == 1
        if not conserved:
            status = MISMATCH
        oh = "-" if s.overhead_vs_none is None else f"{s.overhead_vs_none * 100:+.2f}%"
        ref = "vs direct" if args.workload == "redirect" else "vs none"
        out.result(
            s.summary(),
            f"{s.workload} [{s.mode}] {s.payload_bytes} B x{s.count} reps={s.reps}: "
            f"median {s.median_latency_us:.1f} us (sim), {oh} {ref}, "
            f"delivered {s.delivered[0]}, wall {s.wall_median_ms:.1f} ms",
        )
    return status


# -- policies --------------------------------------------------------------


def _inventory(data: dict) -> AppInventory:
    try:
        apps = []
        for a in data["apps"]:
            apps.append(
                AppSpec(
                    a["name"],
                    AppManifest(frozenset(a.get("publishes", ())), frozenset(a.get("subscribes", ()))),
                    frozenset(a.get("sensors", ())),
                    bool(a.get("network", False)),
                    bool(a.get("files", False)),
                    bool(a.get("raw_feed", False)),
                    tuple(a.get("net_destinations", ())),
                )
            )
        return AppInventory.of(apps)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad inventory: {exc}") from None


def _high_level(args) -> HighLevelPolicy:
    if args.policy == "process-locally":
        return HighLevelPolicy.process_locally()
    if args.policy == "blur-exported-images":
        return HighLevelPolicy.blur_exported_images(args.trusted_app or "BlurFilter")
    return HighLevelPolicy.use_drone_lanes(args.trusted_app or "TrustedLogger")


def cmd_policy_compile(args, out: Output) -> int:
    try:
        data = json.loads(_read_text(args.inventory))
    except json.JSONDecodeError as exc:
        raise UsageError(f"inventory is not JSON: {exc}") from None
    g = compile_policy(_high_level(args), _inventory(data))
    text = serialize_policy(g)
    _write(args.output, text, out)
    if out.as_json:
        out.result(_graph_summary("compile", g, policy=args.policy), "")
    return OK


def _graph_summary(kind: str, g, **extra) -> dict:
    return {
        "kind": kind,
        "nodes": len(g.nodes),
        "edges": len(g.edges),
        "trusted": sorted(g.trusted),
        "netwhitelist": sorted(g.net_whitelist),
        **extra,
    }


def cmd_policy_parse(args, out: Output) -> int:
    status = OK
    for path in args.files:
        text = _read_text(path)
        try:
            g = parse_policy(text)
        except PolicySyntaxError as exc:
            valid = False
            out.result(
                {"kind": "parse", "file": path, "valid": False, "line": exc.line, "error": str(exc)},
                f"{path}: {exc}",
            )
        else:
            valid = True
            summary = _graph_summary("parse", g, file=path, valid=True)
            if args.canonical and not out.as_json:
                sys.stdout.write(serialize_policy(g))
            else:
                out.result(summary, f"{path}: ok ({len(g.nodes)} nodes, {len(g.edges)} edges)")
        if valid != (args.expect == "valid"):
            status = MISMATCH
    return status


def cmd_policy_extract(args, out: Output) -> int:
    cand = extract_graph(_read_text(args.audit_log))
    g = cand.accept()
    _write(args.output, serialize_policy(g), out)
    if out.as_json:
        out.result(_graph_summary("extract", g, records=len(cand.records)), "")
    return OK


# -- airspace --------------------------------------------------------------


def _authority(args) -> Authority:
    return Authority(args.registry, seed=args.authority_seed.encode())


def _polygon(path: str):
    return parse_polygon(_read_text(path))


def cmd_host_register(args, out: Output) -> int:
    auth = _authority(args)
    hid = auth.register_host(_polygon(args.polygon), _read_text(args.policy), args.id)
    out.result({"kind": "host-register", "id": hid}, hid)
    return OK


def cmd_redzone_register(args, out: Output) -> int:
    auth = _authority(args)
    zid = auth.register_redzone(_polygon(args.polygon), args.id)
    out.result({"kind": "redzone-register", "id": zid}, zid)
    return OK


def cmd_drone_register(args, out: Output) -> int:
    auth = _authority(args)
    key = crypto.Ed25519Scheme().keypair(args.drone_seed.encode()).public
    did = auth.register_drone(key, args.id)
    out.result({"kind": "drone-register", "id": did, "key": key.hex()}, f"{did} {key.hex()}")
    return OK


def cmd_plan_submit(args, out: Output) -> int:
    auth = _authority(args)
    key = crypto.Ed25519Scheme().keypair(args.drone_seed.encode()).public
    if args.register:
        auth.register_drone(key)
    art = auth.submit_flight_plan(key, _polygon(args.polygon))
    if args.output:
        _write(args.output, art.encode(), out)
    verdict = art.verdict.value
    hosts = [p.host_id for p in art.policies]
    text = f"{verdict}" + (f" red zone {art.redzone}" if art.redzone else f" hosts: {' '.join(hosts) or '-'}")
    out.result(
        {"kind": "plan-submit", "verdict": verdict, "redzone": art.redzone, "hosts": hosts},
        text,
    )
    if args.expect and args.expect.upper() != verdict:
        return MISMATCH
    return OK


def cmd_artifact_verify(args, out: Output) -> int:
    art = PermissionArtifact.decode(_read_bytes(args.artifact))
    ok = art.verify(Authority(None, seed=args.authority_seed.encode()).public_key)
    out.result(
        {"kind": "artifact-verify", "signature_ok": ok, "verdict": art.verdict.value},
        f"signature {'ok' if ok else 'INVALID'}, verdict {art.verdict.value}",
    )
    return OK if ok else MISMATCH


# -- attestation -----------------------------------------------------------


def _attested_fixture(mode: EnforcementMode, tamper: str) -> F.Fixture:
    boot = F.BOOT_COMPONENTS
    if tamper == "boot":
        name, blob = boot[1]
        boot = (boot[0], (name, blob + b"rootkit"), *boot[2:])
    fx = F.Fixture(mode, boot=boot)
    for name in ATTESTED_APPS:
        image = fx.image("BadCameraStatus") if tamper == "swap" and name == "CameraStatus" else None
        fx.launch(name, {"address": F.STATUS_ADDR} if name == "CameraStatus" else None, image=image)
    fx.runtime.run_for(0)
    return fx


def reference_verifier() -> Verifier:
    fx = F.Fixture(EnforcementMode.FULL)
    return fx.verifier(F.expected_apps(fx, ATTESTED_APPS))


def cmd_attest_report(args, out: Output) -> int:
    nonce = _hex(args.nonce, "nonce")
    fx = _attested_fixture(EnforcementMode(args.mode), args.tamper)
    report = fx.tee.attest(nonce)
    data = report.encode()
    if args.output:
        _write(args.output, data, out)
    elif not out.as_json:
        print(data.hex())
    out.result(
        {
            "kind": "attest-report",
            "chain": report.chain.hex(),
            "apps": [e.app for e in report.launch_log],
            "tamper": args.tamper,
            "bytes": len(data),
        },
        f"chain {report.chain.hex()} apps {len(report.launch_log)}" if args.output else "",
    )
    return OK


def cmd_attest_verify(args, out: Output) -> int:
    nonce = _hex(args.nonce, "nonce")
    raw = _read_bytes(args.report)
    try:
        report = AttestationReport.decode(raw)
    except ValueError:
        try:
            report = AttestationReport.decode(bytes.fromhex(raw.decode("ascii").strip()))
        except ValueError as exc:
            raise UsageError(f"cannot decode report: {exc}") from None
    v = reference_verifier()
    v.challenge(nonce)
    verdict = v.verify(report, nonce)
    out.result(
        {"kind": "attest-verify", "trusted": verdict.trusted, "reason": verdict.reason},
        str(verdict),
    )
    if args.expect is None:
        return OK if verdict.trusted else MISMATCH
    return OK if verdict.trusted == (args.expect == "trusted") else MISMATCH


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(add_help=False)
    top.add_argument("--json", action="store_true", help="one JSON object per result")
    top.add_argument("-v", "--verbose", action="count", default=0)
    # options repeated after the subcommand must not reset the top-level values
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS, help=argparse.SUPPRESS)

    p = _Parser(prog="dronemac", description="Policy enforcement framework for drone software.", parents=[top])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("scenarios", parents=[common], help="list built-in scenarios")
    s.set_defaults(func=cmd_scenarios)

    s = sub.add_parser("run", parents=[common], help="run an attack/defence scenario")
    s.add_argument("scenario", help="scenario name, or 'all'")
    s.add_argument("--mode", choices=["none", "manifest", "full", "all"], default="full")
    s.add_argument("--transcript", action="store_true", help="print the run transcript")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("bench", parents=[common], help="pub/sub and redirection benchmarks")
    s.add_argument("workload", help=f"one of {', '.join(B.WORKLOADS)} or 'redirect'")
    s.add_argument("--mode", choices=["none", "manifest", "full"], default="full")
    s.add_argument("--reps", type=int, default=10)
    s.add_argument("--count", type=int, default=100)
    s.set_defaults(func=cmd_bench)

    pol = sub.add_parser("policy", parents=[common], help="policy tools")
    psub = pol.add_subparsers(dest="policy_command", required=True, parser_class=_Parser)
    s = psub.add_parser("compile", parents=[common], help="compile a high-level policy")
    s.add_argument("inventory", help="inventory JSON ({'apps': [...]})")
    s.add_argument("--policy", required=True, choices=["process-locally", "blur-exported-images", "use-drone-lanes"])
    s.add_argument("--trusted-app", help="declassifier or logger application name")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_policy_compile)
    s = psub.add_parser("parse", parents=[common], help="validate policy files")
    s.add_argument("files", nargs="+")
    s.add_argument("--expect", choices=["valid", "invalid"], default="valid")
    s.add_argument("--canonical", action="store_true", help="print the canonical form")
    s.set_defaults(func=cmd_policy_parse)
    s = psub.add_parser("extract", parents=[common], help="derive a policy from an audit log")
    s.add_argument("audit_log")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_policy_extract)

    air = sub.add_parser("airspace", parents=[common], help="airspace authority")
    asub = air.add_subparsers(dest="airspace_command", required=True, parser_class=_Parser)
    reg = argparse.ArgumentParser(add_help=False)
    reg.add_argument("--registry", required=True, help="JSONL registry file")
    reg.add_argument("--authority-seed", default="airspace-authority")
    s = asub.add_parser("host-register", parents=[common, reg])
    s.add_argument("--polygon", required=True)
    s.add_argument("--policy", required=True)
    s.add_argument("--id")
    s.set_defaults(func=cmd_host_register)
    s = asub.add_parser("redzone-register", parents=[common, reg])
    s.add_argument("--polygon", required=True)
    s.add_argument("--id")
    s.set_defaults(func=cmd_redzone_register)
    s = asub.add_parser("drone-register", parents=[common, reg])
    s.add_argument("--drone-seed", default=F.DRONE_SEED.decode())
    s.add_argument("--id")
    s.set_defaults(func=cmd_drone_register)
    s = asub.add_parser("plan-submit", parents=[common, reg])
    s.add_argument("--polygon", required=True, help="flight region")
    s.add_argument("--drone-seed", default=F.DRONE_SEED.decode())
    s.add_argument("--register", action="store_true", help="register the drone key first")
    s.add_argument("-o", "--output", help="write the permission artifact here")
    s.add_argument("--expect", choices=["approved", "rejected"])
    s.set_defaults(func=cmd_plan_submit)
    s = asub.add_parser("artifact-verify", parents=[common])
    s.add_argument("artifact")
    s.add_argument("--authority-seed", default="airspace-authority")
    s.set_defaults(func=cmd_artifact_verify)

    att = sub.add_parser("attest", parents=[common], help="remote attestation")
    tsub = att.add_subparsers(dest="attest_command", required=True, parser_class=_Parser)
    s = tsub.add_parser("report", parents=[common], help="boot a drone and produce a signed report")
    s.add_argument("--nonce", required=True, help="verifier nonce (hex)")
    s.add_argument("--tamper", choices=["none", "boot", "swap"], default="none")
    s.add_argument("--mode", choices=["none", "manifest", "full"], default="manifest")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_attest_report)
    s = tsub.add_parser("verify", parents=[common], help="verify a report against the reference stack")
    s.add_argument("report")
    s.add_argument("--nonce", required=True)
    s.add_argument("--expect", choices=["trusted", "untrusted"])
    s.set_defaults(func=cmd_attest_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    out = Output(args.json)
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"dronemac: error: {exc}", file=sys.stderr)
        return USAGE
    except (DroneMacError, ValueError) as exc:
        print(f"dronemac: {type(exc).__name__}: {exc}", file=sys.stderr)
        return MISMATCH


if __name__ == "__main__":
    sys.exit(main())
