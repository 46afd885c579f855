"""Command-line interface for the train / protect / detect / review workflow.

Exit codes: 0 ok, 2 validation error, 3 size limit exceeded, 4 training
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .asm import assemble, disassemble
from .bundle import analyze_bundle
from .config import Config, load_config
from .epp import IndexSpaceOverflow
from .oracle import TraceMismatch
from .program import ContractProgram, SizeLimitExceeded, ValidationError
from .vm import Account
from . import workflow
from .workflow import (
    Bundle,
    GuardedBundle,
    TrainingTxFailed,
    WorkflowError,
    load_txs,
    overhead_report,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SIZE = 3
EXIT_TRAINING = 4


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ValidationError, WorkflowError, IndexSpaceOverflow, TraceMismatch) as exc:
        if isinstance(exc, TrainingTxFailed):
            print(f"training failure: {exc}", file=sys.stderr)
            return EXIT_TRAINING
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SizeLimitExceeded as exc:
        print(f"size limit: {exc}", file=sys.stderr)
        return EXIT_SIZE


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathguard",
        description="Path-profiling anomaly guard for the contract VM",
    )
    parser.add_argument("--config", help="JSON config file (width, gas, boundary...)")
    sub = parser.add_subparsers(required=True)

    p = sub.add_parser("asm", help="assemble a contract source file")
    p.add_argument("source")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(handler=_cmd_asm)

    p = sub.add_parser("disasm", help="disassemble a serialized contract")
    p.add_argument("program")
    p.set_defaults(handler=_cmd_disasm)

    p = sub.add_parser("analyze", help="dump graphs and labelings for a bundle")
    p.add_argument("bundle")
    p.add_argument("--dump-cfg", action="store_true")
    p.add_argument("--dump-callgraph", action="store_true")
    p.set_defaults(handler=_cmd_analyze)

    p = sub.add_parser("train", help="run the corpus and write the safe-set snapshot")
    p.add_argument("bundle")
    p.add_argument("txs")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("protect", help="instrument the bundle against a snapshot")
    p.add_argument("bundle")
    p.add_argument("snapshot")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(handler=_cmd_protect)

    p = sub.add_parser("run", help="execute a transaction stream with detection")
    p.add_argument("guarded")
    p.add_argument("txs")
    p.add_argument("--alarms", help="alarm log output (JSON lines)")
    p.add_argument("--report", help="overhead report output (JSON)")
    p.add_argument("--world", help="save the post-run world state here")
    p.set_defaults(handler=_cmd_run)

    p = sub.add_parser("approve", help="append a rejected tx's paths to the mapping")
    p.add_argument("guarded")
    p.add_argument("world", help="world state saved by `run`")
    p.add_argument("alarm_log")
    p.add_argument("--index", type=int, required=True, help="alarmed tx index")
    p.add_argument("--admin", required=True)
    p.set_defaults(handler=_cmd_approve)

    p = sub.add_parser(
        "simulate-false-alarms", help="cold-start alarm count with immediate approval"
    )
    p.add_argument("bundle")
    p.add_argument("txs")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("fixture", help="write a built-in scenario bundle and streams")
    p.add_argument("name")
    p.add_argument("-o", "--outdir", default=".")
    p.set_defaults(handler=_cmd_fixture)
    return parser


def _config(args) -> Config | None:
    return load_config(args.config) if args.config else None


def _cmd_asm(args) -> int:
    config = _config(args) or Config()
    prog = assemble(Path(args.source).read_text(), config)
    Path(args.output).write_text(json.dumps(prog.to_json(), indent=2))
    print(f"{prog.name}: {len(prog.functions)} functions, {prog.byte_size} bytes")
    return EXIT_OK


def _cmd_disasm(args) -> int:
    prog = ContractProgram.from_json(json.loads(Path(args.program).read_text()))
    print(disassemble(prog), end="")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    bundle = Bundle.load(args.bundle, _config(args))
    analysis = analyze_bundle(bundle.programs, bundle.boundary, bundle.config)
    out: dict = {"fingerprint": analysis.fingerprint()}
    if args.dump_cfg or not args.dump_callgraph:
        out["cfgs"] = {
            f"{name}.{analysis.programs[name].functions[fid].name}": cfg.to_json()
            for (name, fid), cfg in sorted(analysis.cfgs.items())
        }
    if args.dump_callgraph or not args.dump_cfg:
        out["callgraph"] = analysis.callgraph.to_json()
        out["num_ccs"] = {
            f"{node[0]}.fn{node[1]}": n
            for node, n in sorted(analysis.ccp.num_ccs.items())
            if node[1] >= 0
        }
    out["num_paths"] = {
        f"{name}.{analysis.programs[name].functions[fid].name}": lab.total_paths
        for (name, fid), lab in sorted(analysis.epp.items())
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _cmd_train(args) -> int:
    bundle = Bundle.load(args.bundle, _config(args))
    snapshot = workflow.train(bundle, load_txs(args.txs))
    Path(args.output).write_text(json.dumps(snapshot, indent=2, sort_keys=True))
    total = sum(
        len(fn["safe"])
        for per_fn in snapshot["contracts"].values()
        for fn in per_fn.values()
    )
    print(f"trained: {total} safe paths, fingerprint {snapshot['fingerprint']}")
    return EXIT_OK


def _cmd_protect(args) -> int:
    bundle = Bundle.load(args.bundle, _config(args))
    snapshot = json.loads(Path(args.snapshot).read_text())
    guarded = workflow.protect(bundle, snapshot)
    Path(args.output).write_text(json.dumps(guarded.to_json(), indent=2))
    for name, info in guarded.deployment_report().items():
        print(
            f"{name}: {info['original_size']} -> {info['instrumented_size']} bytes "
            f"({info['deploy_overhead_pct']}% deployment overhead)"
        )
    return EXIT_OK


def _load_guarded(path: str, config: Config | None) -> GuardedBundle:
    raw = json.loads(Path(path).read_text())
    bundle = Bundle.from_json(
        {
            "contracts": [{"program": p} for p in raw["originals"].values()],
            "boundary": raw["boundary"],
            "deploy": raw["deploy"],
            "accounts": raw.get("accounts", []),
            "setup": raw.get("setup", []),
        },
        config,
    )
    return workflow.protect(bundle, raw["snapshot"])


def _cmd_run(args) -> int:
    guarded = _load_guarded(args.guarded, _config(args))
    run = workflow.run_detection(guarded, load_txs(args.txs))
    statuses = [o.status for o in run.outcomes]
    print(
        f"executed {len(statuses)} txs: "
        + ", ".join(f"{s}={statuses.count(s)}" for s in sorted(set(statuses)))
    )
    print(f"alarms: {len(run.alarm_log)} on {len({a.tx_index for a in run.alarm_log})} txs")
    if args.alarms:
        lines = [json.dumps(a.to_json()) for a in run.alarm_log]
        Path(args.alarms).write_text("\n".join(lines) + ("\n" if lines else ""))
    if args.report:
        Path(args.report).write_text(json.dumps(overhead_report(run), indent=2))
    if args.world:
        Path(args.world).write_text(json.dumps(_dump_world(run.deployed), indent=2))
    return EXIT_OK


def _cmd_approve(args) -> int:
    guarded = _load_guarded(args.guarded, _config(args))
    run = workflow.start_detection(guarded)
    _restore_world(run.deployed, json.loads(Path(args.world).read_text()), guarded)
    for line in Path(args.alarm_log).read_text().splitlines():
        if line.strip():
            raw = json.loads(line)
            run.alarm_log.append(
                workflow.AlarmRecord(
                    tx_index=raw["tx_index"],
                    contract=int(raw["contract"], 16),
                    function=raw["function"],
                    ctx_id=raw["ctx_id"],
                    epp_id=raw["epp_id"],
                    combined_id=int(raw["combined_id"], 16),
                    context_chain=raw["context_chain"],
                    path_blocks=raw["path_blocks"],
                    inner=raw.get("inner", False),
                )
            )
    admin = int(args.admin, 16) if args.admin.lower().startswith("0x") else int(args.admin)
    result = workflow.review_and_approve(run, args.index, admin)
    print(f"approved {result['approved']} paths ({result.get('gas', 0)} gas)")
    Path(args.world).write_text(json.dumps(_dump_world(run.deployed), indent=2))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    bundle = Bundle.load(args.bundle, _config(args))
    result = workflow.false_alarm_simulation(bundle, load_txs(args.txs))
    print(f"false alarms: {result['alarms']}")
    return EXIT_OK


def _cmd_fixture(args) -> int:
    import random

    from . import fixtures

    scenario = fixtures.by_name(args.name)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / f"{scenario.name}.bundle.json").write_text(
        json.dumps(scenario.bundle_json, indent=2)
    )
    rng = random.Random(0)
    state = scenario.fresh_state()
    train_stream = list(scenario.training) + [
        scenario.sample_normal(rng, state) for _ in range(20)
    ]
    (outdir / f"{scenario.name}.train.jsonl").write_text(
        "\n".join(json.dumps(r) for r in train_stream) + "\n"
    )
    records, alarm_index = scenario.test_sequence(random.Random(1))
    (outdir / f"{scenario.name}.detect.jsonl").write_text(
        "\n".join(json.dumps(r) for r in records) + "\n"
    )
    print(
        f"wrote {scenario.name} bundle + streams; attack expected at tx {alarm_index}"
    )
    return EXIT_OK


def _dump_world(deployed) -> dict:
    world = deployed.world
    return {
        "next_address": world.next_address,
        "addresses": {name: hex(a) for name, a in deployed.addresses.items()},
        "accounts": {
            hex(addr): {
                "balance": acct.balance,
                "storage": {hex(k): hex(v) for k, v in sorted(acct.storage.items())},
                "code": acct.code.name if acct.code else None,
            }
            for addr, acct in sorted(world.accounts.items())
        },
    }


def _restore_world(deployed, raw: dict, guarded: GuardedBundle) -> None:
    world = deployed.world
    programs = guarded.programs()
    world.accounts.clear()
    world.next_address = raw["next_address"]
    for addr_hex, entry in raw["accounts"].items():
        acct = Account(
            balance=entry["balance"],
            storage={int(k, 16): int(v, 16) for k, v in entry["storage"].items()},
            code=programs.get(entry["code"]) if entry["code"] else None,
        )
        world.accounts[int(addr_hex, 16)] = acct
    world.commit(0)
    deployed.addresses.clear()
    deployed.addresses.update({n: int(a, 16) for n, a in raw["addresses"].items()})
    deployed.names.clear()
    deployed.names.update({a: n for n, a in deployed.addresses.items()})


if __name__ == "__main__":
    sys.exit(main())
