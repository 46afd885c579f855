"""Train / protect / detect / review workflow over contract bundles.

A bundle declares contracts (assembly or serialized programs), the protection
boundary, a deployment plan, account funding, and optional setup
transactions. Training runs the corpus uninstrumented and collects checked
pairs through the trace oracle; protection instruments and redeploys;
detection executes a transaction stream against the guarded world with a
mirrored uninstrumented world for exact overhead accounting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .asm import assemble
from .bundle import BundleAnalysis, analyze_bundle
from .callgraph import K_SURROGATE, S
from .ccp import id_to_context, split_index
from .config import Config, DEFAULT_CONFIG, load_config
from .epp import index_to_path
from .guardcode import Layout
from .instrument import InstrumentedContract, instrument_contract
from .oracle import trace_oracle
from .pathset import (
    STRATEGY_LIST,
    STRATEGY_MPHT,
    build_mpht,
    choose_strategy,
    mapping_slot,
    mapping_value,
)
from .program import ContractProgram
from .vm import (
    Receipt,
    STATUS_ACCEPTED,
    STATUS_GUARD_REVERTED,
    Transaction,
    TRACE_CHECKS,
    TRACE_FULL,
    TRACE_NONE,
    VM,
    WorldState,
    deploy,
)


class WorkflowError(Exception):
    pass


class TrainingTxFailed(WorkflowError):
    pass


class FingerprintMismatch(WorkflowError):
    pass


class NotAdmin(WorkflowError):
    pass


@dataclass
class Bundle:
    """Deployable set of contracts plus world-initialization script."""

    programs: dict[str, ContractProgram]
    boundary: set[str]
    config: Config
    deploy_order: list[str]
    accounts: dict[int, int] = field(default_factory=dict)  # address -> balance
    setup: list[dict] = field(default_factory=list)  # raw tx records

    @classmethod
    def load(cls, path: str | Path, config: Config | None = None) -> "Bundle":
        raw = json.loads(Path(path).read_text())
        return cls.from_json(raw, config)

    @classmethod
    def from_json(cls, raw: dict, config: Config | None = None) -> "Bundle":
        if config is None:
            cfg_raw = raw.get("config", {})
            config = _config_from_json(cfg_raw)
        programs = {}
        for entry in raw["contracts"]:
            if "source" in entry:
                prog = assemble(entry["source"], config)
            else:
                prog = ContractProgram.from_json(entry["program"])
            programs[prog.name] = prog
        boundary = set(raw.get("boundary", list(programs)))
        deploy_order = raw.get("deploy", list(programs))
        accounts = {
            _word(acct["address"]): _word(acct.get("balance", 0))
            for acct in raw.get("accounts", [])
        }
        return cls(programs, boundary, config, deploy_order, accounts, raw.get("setup", []))


def _config_from_json(raw: dict) -> Config:
    import tempfile

    if not raw:
        return DEFAULT_CONFIG
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(raw, fh)
        name = fh.name
    return load_config(name)


def _word(value) -> int:
    if isinstance(value, str):
        return int(value, 16) if value.lower().startswith("0x") else int(value)
    return int(value)


@dataclass
class DeployedWorld:
    world: WorldState
    addresses: dict[str, int]  # contract name -> address
    names: dict[int, str]  # address -> contract name

    def resolve(self, ref) -> int:
        if isinstance(ref, str) and ref in self.addresses:
            return self.addresses[ref]
        if isinstance(ref, str) and ref.startswith("@"):
            return self.addresses[ref[1:]]
        return _word(ref)


def build_world(
    bundle: Bundle, programs: dict[str, ContractProgram] | None = None
) -> DeployedWorld:
    """Deploy a bundle into a fresh world; deterministic address assignment."""
    progs = programs or bundle.programs
    world = WorldState(bundle.config)
    addresses: dict[str, int] = {}
    for name in bundle.deploy_order:
        addresses[name] = deploy(world, progs[name], 0xD0)
    for addr, balance in bundle.accounts.items():
        world.set_balance(addr, balance)
    world.commit(0)
    return DeployedWorld(world, addresses, {a: n for n, a in addresses.items()})


def parse_tx(record: dict, deployed: DeployedWorld, bundle: Bundle) -> Transaction:
    """One JSON transaction record into a VM transaction.

    ``to`` may be a contract name or address; ``fn`` a function name,
    "fallback", or a hex selector; calldata words may use "@Name" to refer
    to deployed contract addresses.
    """
    to = deployed.resolve(record["to"])
    fn = record.get("fn", "fallback")
    if fn == "fallback":
        selector = None
    elif isinstance(fn, str) and not fn.startswith("0x"):
        name = deployed.names.get(to)
        prog = bundle.programs.get(name)
        if prog is None:
            raise WorkflowError(f"cannot resolve function {fn!r} on {record['to']}")
        selector = prog.selector_of(fn)
        if selector is None:
            raise WorkflowError(f"{name}.{fn} has no selector")
    else:
        selector = _word(fn)
    calldata = [deployed.resolve(w) for w in record.get("calldata", [])]
    return Transaction(
        origin=_word(record.get("origin", 1)),
        to=to,
        selector=selector,
        calldata=calldata,
        value=_word(record.get("value", 0)),
        gas_limit=int(record.get("gas_limit", 10_000_000)),
    )


def load_txs(path: str | Path) -> list[dict]:
    records = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            records.append(json.loads(line))
    return records


# -- training --------------------------------------------------------------------


def train(
    bundle: Bundle, tx_records: list[dict], analysis: BundleAnalysis | None = None
) -> dict:
    """Execute the corpus uninstrumented; union oracle pairs into a snapshot."""
    analysis = analysis or analyze_bundle(bundle.programs, bundle.boundary, bundle.config)
    deployed = build_world(bundle)
    safe: dict[tuple[str, int], set[int]] = {}
    for index, record in enumerate(bundle.setup + tx_records):
        tx = parse_tx(record, deployed, bundle)
        receipt = VM(deployed.world, TRACE_FULL).execute_transaction(tx)
        if receipt.status != STATUS_ACCEPTED:
            raise TrainingTxFailed(
                f"training tx {index} ({record}) ended {receipt.status}"
            )
        for addr, code, fid, combined in trace_oracle(
            receipt.trace, analysis, receipt.status
        ):
            safe.setdefault((code, fid), set()).add(combined)
    return make_snapshot(analysis, safe, bundle.config)


def make_snapshot(
    analysis: BundleAnalysis, safe: dict[tuple[str, int], set[int]], config: Config
) -> dict:
    contracts: dict = {}
    for name in sorted(analysis.boundary):
        prog = analysis.programs[name]
        per_fn = {}
        for fn in prog.functions:
            keys = sorted(safe.get((name, fn.id), ()))
            space = analysis.index_space(name, fn.id)
            embedded = [k for k in keys if k < space]
            strategy = choose_strategy(len(embedded))
            mpht = None
            if strategy == STRATEGY_MPHT:
                try:
                    mpht = build_mpht(
                        embedded, config.guard.mpht_lambda, width=config.width
                    ).to_json()
                except Exception:
                    strategy = STRATEGY_LIST
            per_fn[str(fn.id)] = {
                "name": fn.name,
                "num_paths": analysis.num_paths(name, fn.id),
                "num_ccs": analysis.num_ccs(name, fn.id),
                "safe": [hex(k) for k in keys],
                "strategy": strategy,
                "mpht": mpht,
            }
        contracts[name] = per_fn
    return {
        "fingerprint": analysis.fingerprint(),
        "width": config.width,
        "lambda": config.guard.mpht_lambda,
        "contracts": contracts,
    }


def snapshot_safe_sets(snapshot: dict, name: str) -> dict[int, set[int]]:
    return {
        int(fid): {int(h, 16) for h in entry["safe"]}
        for fid, entry in snapshot["contracts"].get(name, {}).items()
    }


# -- protection --------------------------------------------------------------------


@dataclass
class GuardedBundle:
    bundle: Bundle
    analysis: BundleAnalysis
    instrumented: dict[str, InstrumentedContract]
    snapshot: dict

    def programs(self) -> dict[str, ContractProgram]:
        progs = dict(self.bundle.programs)
        for name, inst in self.instrumented.items():
            progs[name] = inst.program
        return progs

    def deployment_report(self) -> dict:
        per_contract = {}
        for name, inst in self.instrumented.items():
            per_contract[name] = {
                "original_size": inst.original_size,
                "instrumented_size": inst.instrumented_size,
                "deploy_overhead_pct": round(100 * inst.deploy_overhead_pct, 2),
                "deploy_gas_extra": (
                    (inst.instrumented_size - inst.original_size)
                    * self.bundle.config.gas.code_deposit_per_byte
                ),
                "mapping_preseed": len(inst.mapping_preseed),
            }
        return per_contract

    def to_json(self) -> dict:
        return {
            "fingerprint": self.snapshot["fingerprint"],
            "snapshot": self.snapshot,
            "boundary": sorted(self.bundle.boundary),
            "deploy": self.bundle.deploy_order,
            "accounts": [
                {"address": hex(a), "balance": b} for a, b in self.bundle.accounts.items()
            ],
            "setup": self.bundle.setup,
            "originals": {
                name: prog.to_json() for name, prog in self.bundle.programs.items()
            },
            "contracts": {
                name: {
                    "program": inst.program.to_json(),
                    "original_size": inst.original_size,
                    "instrumented_size": inst.instrumented_size,
                    "admin_selector": hex(inst.admin_selector),
                    "preseed": [[fid, hex(k)] for fid, k in inst.mapping_preseed],
                    "plan": inst.plan_listing(),
                }
                for name, inst in self.instrumented.items()
            },
        }


def protect(bundle: Bundle, snapshot: dict) -> GuardedBundle:
    """Instrument every boundary contract against the trained snapshot."""
    analysis = analyze_bundle(bundle.programs, bundle.boundary, bundle.config)
    if snapshot["fingerprint"] != analysis.fingerprint():
        raise FingerprintMismatch(
            "snapshot was trained against different code or labeling"
        )
    instrumented = {}
    for name in sorted(bundle.boundary):
        instrumented[name] = instrument_contract(
            name, analysis, snapshot_safe_sets(snapshot, name), bundle.config
        )
    return GuardedBundle(bundle, analysis, instrumented, snapshot)


# -- detection ---------------------------------------------------------------------


@dataclass
class AlarmRecord:
    tx_index: int
    contract: int
    function: int
    ctx_id: int
    epp_id: int
    combined_id: int
    context_chain: list[str]
    path_blocks: list[int]
    inner: bool = False  # raised by a non-entry protected region

    def to_json(self) -> dict:
        return {
            "tx_index": self.tx_index,
            "contract": hex(self.contract),
            "function": self.function,
            "ctx_id": self.ctx_id,
            "epp_id": self.epp_id,
            "combined_id": hex(self.combined_id),
            "context_chain": self.context_chain,
            "path_blocks": self.path_blocks,
            "inner": self.inner,
        }


@dataclass
class TxOutcome:
    index: int
    status: str
    gas_instr: int
    gas_orig: int | None
    alarms: list[AlarmRecord]
    receipt: Receipt
    record: dict | None = None


@dataclass
class DetectionRun:
    guarded: GuardedBundle
    deployed: DeployedWorld
    mirror: DeployedWorld | None
    outcomes: list[TxOutcome] = field(default_factory=list)
    alarm_log: list[AlarmRecord] = field(default_factory=list)
    point_gas: dict[tuple[str, str], int] = field(default_factory=dict)
    point_hits: dict[tuple[str, str], int] = field(default_factory=dict)
    recon_failures: list[int] = field(default_factory=list)

    def next_index(self) -> int:
        return len(self.outcomes)


def deploy_guarded(guarded: GuardedBundle) -> DeployedWorld:
    """Deploy the instrumented bundle, preseed mappings, run setup txs."""
    deployed = build_world(guarded.bundle, guarded.programs())
    config = guarded.bundle.config
    for name, inst in guarded.instrumented.items():
        if inst.mapping_preseed:
            tx = Transaction(
                origin=config.admin,
                to=deployed.addresses[name],
                selector=inst.admin_selector,
                calldata=inst.preseed_calldata(config),
            )
            receipt = VM(deployed.world, TRACE_NONE).execute_transaction(tx)
            if receipt.status != STATUS_ACCEPTED:
                raise WorkflowError(f"preseed failed on {name}: {receipt.status}")
    for record in guarded.bundle.setup:
        tx = parse_tx(record, deployed, guarded.bundle)
        receipt = VM(deployed.world, TRACE_NONE).execute_transaction(tx)
        if receipt.status != STATUS_ACCEPTED:
            raise WorkflowError(f"setup tx failed on guarded world: {receipt.status}")
    return deployed


def start_detection(guarded: GuardedBundle, mirror: bool = True) -> DetectionRun:
    deployed = deploy_guarded(guarded)
    shadow = None
    if mirror:
        shadow = build_world(guarded.bundle)
        for record in guarded.bundle.setup:
            tx = parse_tx(record, shadow, guarded.bundle)
            VM(shadow.world, TRACE_NONE).execute_transaction(tx)
    return DetectionRun(guarded, deployed, shadow)


def run_transaction(run: DetectionRun, record: dict) -> TxOutcome:
    """Execute one stream transaction on the guarded world (and its mirror)."""
    guarded = run.guarded
    config = guarded.bundle.config
    lay = Layout(config.width, config.guard.alarm_buffer_cap)
    index = run.next_index()
    tx = parse_tx(record, run.deployed, guarded.bundle)

    attribution: dict[tuple[str, int, int], int] = {}

    def probe(code, fid, off, amount):
        key = (code, fid, off)
        attribution[key] = attribution.get(key, 0) + amount

    vm = VM(run.deployed.world, TRACE_CHECKS, lay.check_log, gas_probe=probe)
    receipt = vm.execute_transaction(tx)

    alarms = _collect_alarms(run, index, receipt)
    gas_orig = None
    if run.mirror is not None and receipt.status == STATUS_ACCEPTED and not alarms:
        # alarmed-but-accepted txs had a protected region rolled back; they
        # are not behavior-equivalent, so the mirror skips them
        mirror_tx = parse_tx(record, run.mirror, guarded.bundle)
        mirror_receipt = VM(run.mirror.world, TRACE_NONE).execute_transaction(mirror_tx)
        gas_orig = mirror_receipt.gas_used
        _reconcile(run, index, receipt, attribution, gas_orig)
    outcome = TxOutcome(
        index, receipt.status, receipt.gas_used, gas_orig, alarms, receipt, record
    )
    run.outcomes.append(outcome)
    run.alarm_log.extend(alarms)
    return outcome


def _collect_alarms(run: DetectionRun, index: int, receipt: Receipt) -> list[AlarmRecord]:
    alarms = []
    if receipt.status == STATUS_GUARD_REVERTED:
        for raw in receipt.alarms:
            alarms.append(_enrich_alarm(run, index, raw, False))
    else:
        for ev in receipt.trace:
            if ev.kind == "Revert" and ev.get("guard"):
                for raw in ev.get("alarms", []):
                    alarms.append(_enrich_alarm(run, index, raw, True))
    return alarms


def _enrich_alarm(run: DetectionRun, index: int, raw, inner: bool) -> AlarmRecord:
    analysis = run.guarded.analysis
    config = run.guarded.bundle.config
    contract, fid, combined = raw.contract, raw.fn, raw.combined
    code = sorted(analysis.boundary)[raw.code_id]
    if combined == config.mask:
        # sentinel: the anomaly happened in a reentrant callee frame that
        # returned normally after poisoning the ctx slot
        return AlarmRecord(
            index, contract, fid, 0, 0, combined,
            ["<reentrant callee of this function raised the anomaly>"], [], inner,
        )
    num_paths = analysis.num_paths(code, fid)
    num_ccs = analysis.num_ccs(code, fid)
    ctx_id, epp_id = split_index(combined, num_paths)
    chain: list[str] = []
    base = ctx_id
    while base >= 2 * num_ccs:
        chain.append("<reentry via unprotected call>")
        base -= 2 * num_ccs
    if base >= num_ccs:
        chain.append("<entered from unprotected contract>")
        base -= num_ccs
    try:
        for edge in id_to_context(analysis.callgraph, analysis.ccp, (code, fid), base):
            if edge.kind == K_SURROGATE:
                chain.append(f"<recursion surrogate -> {edge.callee[0]}.fn{edge.callee[1]}>")
            elif edge.caller == S:
                chain.append(f"entry -> {edge.callee[0]}.fn{edge.callee[1]}")
            else:
                chain.append(
                    f"{edge.caller[0]}.fn{edge.caller[1]}@{edge.site[2]}"
                    f" -> {edge.callee[0]}.fn{edge.callee[1]}"
                )
    except Exception:
        chain.append(f"<undecodable context {base}>")
    try:
        cfg = analysis.cfgs[(code, fid)]
        lab = analysis.epp[(code, fid)]
        path = index_to_path(cfg, lab, epp_id)
        blocks = [
            cfg.blocks[e.dst].start
            for e in path
            if e.dst in cfg.blocks and not cfg.blocks[e.dst].empty
        ]
    except Exception:
        blocks = []
    return AlarmRecord(index, contract, fid, ctx_id, epp_id, combined, chain, blocks, inner)


def _reconcile(run, index, receipt, attribution, gas_orig) -> None:
    """gas delta must equal the sum of charges at injected offsets."""
    injected_gas = 0
    for name, inst in run.guarded.instrumented.items():
        for (fid, off), pid in inst.injected.items():
            amount = attribution.get((name, fid, off), 0)
            if amount:
                injected_gas += amount
                kind = inst.points[pid].kind
                key = (name, kind)
                run.point_gas[key] = run.point_gas.get(key, 0) + amount
                run.point_hits[key] = run.point_hits.get(key, 0) + 1
    if receipt.gas_used - gas_orig != injected_gas:
        run.recon_failures.append(index)


def run_detection(
    guarded: GuardedBundle, tx_records: list[dict], mirror: bool = True
) -> DetectionRun:
    run = start_detection(guarded, mirror)
    for record in tx_records:
        run_transaction(run, record)
    return run


# -- review / approval ----------------------------------------------------------------


def review_and_approve(
    run: DetectionRun, alarm_tx_index: int, admin: int, approve: bool = True
) -> dict:
    """Replay the rejected transaction in a forked world; optionally approve.

    Approval issues one administration transaction per affected contract
    appending every missing pair to its dynamic mapping (sstore_set gas per
    path). Re-approval is a no-op.
    """
    config = run.guarded.bundle.config
    if admin != config.admin:
        raise NotAdmin(f"{admin:#x} is not the configured administrator")
    alarms = [a for a in run.alarm_log if a.tx_index == alarm_tx_index]
    if not alarms:
        raise WorkflowError(f"no alarms recorded for tx {alarm_tx_index}")
    # triage: replay the rejected transaction in a fork (guard-reverted txs
    # left no state behind, so the current world is their pre-state)
    replay_status = None
    outcome = next((o for o in run.outcomes if o.index == alarm_tx_index), None)
    if outcome is not None and outcome.record is not None:
        fork = run.deployed.world.clone()
        forked = DeployedWorld(fork, dict(run.deployed.addresses), dict(run.deployed.names))
        tx = parse_tx(outcome.record, forked, run.guarded.bundle)
        replay_status = VM(fork, TRACE_NONE).execute_transaction(tx).status
    if not approve:
        return {"approved": 0, "replay_status": replay_status}
    appended = 0
    gas = 0
    by_contract: dict[int, list[tuple[int, int]]] = {}
    for alarm in alarms:
        by_contract.setdefault(alarm.contract, []).append(
            (alarm.function, alarm.combined_id)
        )
    for contract, pairs in sorted(by_contract.items()):
        name = run.deployed.names[contract]
        inst = run.guarded.instrumented[name]
        missing = []
        for fid, key in sorted(set(pairs)):
            slot = mapping_slot(fid, key, config)
            if run.deployed.world.sload(contract, slot) != mapping_value(key, config.width):
                missing.append((fid, key))
        if not missing:
            continue
        words = [len(missing)]
        for fid, key in missing:
            words += [mapping_slot(fid, key, config), mapping_value(key, config.width)]
        tx = Transaction(
            origin=admin, to=contract, selector=inst.admin_selector, calldata=words
        )
        receipt = VM(run.deployed.world, TRACE_NONE).execute_transaction(tx)
        if receipt.status != STATUS_ACCEPTED:
            raise WorkflowError(f"administration tx failed: {receipt.status}")
        appended += len(missing)
        gas += receipt.gas_used
    return {"approved": appended, "gas": gas, "replay_status": replay_status}


# -- reports -----------------------------------------------------------------------


def overhead_report(run: DetectionRun) -> dict:
    guarded = run.guarded
    config = guarded.bundle.config
    per_contract = guarded.deployment_report()
    for name, inst in guarded.instrumented.items():
        by_kind: dict[str, dict] = {}
        for p in inst.points:
            slot = by_kind.setdefault(
                p.kind, {"deploy_bytes": 0, "deploy_gas": 0, "runtime_gas": 0, "hits": 0}
            )
            slot["deploy_bytes"] += p.code_bytes + p.blob_bytes
            slot["deploy_gas"] += (p.code_bytes + p.blob_bytes) * config.gas.code_deposit_per_byte
        for (cname, kind), amount in run.point_gas.items():
            if cname == name:
                by_kind.setdefault(
                    kind, {"deploy_bytes": 0, "deploy_gas": 0, "runtime_gas": 0, "hits": 0}
                )["runtime_gas"] += amount
        for (cname, kind), hits in run.point_hits.items():
            if cname == name:
                by_kind[kind]["hits"] += hits
        per_contract[name]["points"] = by_kind
        per_contract[name]["point_bytes_total"] = sum(
            v["deploy_bytes"] for v in by_kind.values()
        )

    txs = []
    overheads = []
    for out in run.outcomes:
        entry = {
            "index": out.index,
            "status": out.status,
            "gas_instr": out.gas_instr,
            "gas_orig": out.gas_orig,
        }
        if out.gas_orig:
            pct = (out.gas_instr - out.gas_orig) / out.gas_orig
            entry["runtime_overhead_pct"] = round(100 * pct, 2)
            overheads.append(pct)
        txs.append(entry)

    buckets = {"<10%": 0, "10-30%": 0, "30-100%": 0, ">=100%": 0}
    for pct in overheads:
        if pct < 0.10:
            buckets["<10%"] += 1
        elif pct < 0.30:
            buckets["10-30%"] += 1
        elif pct < 1.00:
            buckets["30-100%"] += 1
        else:
            buckets[">=100%"] += 1

    sizes = [
        (info["original_size"], info["instrumented_size"]) for info in per_contract.values()
    ]
    return {
        "contracts": per_contract,
        "transactions": txs,
        "aggregate": {
            "avg_deploy_overhead_pct": round(
                100 * (sum(i / o for o, i in sizes) / len(sizes) - 1), 2
            )
            if sizes
            else 0.0,
            "avg_runtime_overhead_pct": round(
                100 * sum(overheads) / len(overheads), 2
            )
            if overheads
            else 0.0,
            "runtime_overhead_buckets": buckets,
        },
        "false_alarm_count": len({a.tx_index for a in run.alarm_log}),
        "gas_reconciliation_failures": run.recon_failures,
    }


def deploy_overhead_pct(original_size: int, instrumented_size: int) -> float:
    """The size-ratio overhead definition used throughout reporting."""
    return instrumented_size / original_size - 1.0


def runtime_overhead_pct(gas_orig: int, gas_instr: int) -> float:
    return (gas_instr - gas_orig) / gas_orig


# -- false-alarm simulation ----------------------------------------------------------


def false_alarm_simulation(bundle: Bundle, tx_records: list[dict]) -> dict:
    """Cold start with an empty safe set; approve and replay on every alarm.

    Setup transactions go through the same approve-on-alarm loop (there is
    no training to pre-authorize them). Returns the alarm count: the
    manual-review effort upper bound for the stream.
    """
    from dataclasses import replace as dc_replace

    stream = list(bundle.setup) + list(tx_records)
    bundle = dc_replace(bundle, setup=[])
    analysis = analyze_bundle(bundle.programs, bundle.boundary, bundle.config)
    snapshot = make_snapshot(analysis, {}, bundle.config)
    guarded = protect(bundle, snapshot)
    run = start_detection(guarded, mirror=False)
    alarm_txs = 0
    for record in stream:
        outcome = run_transaction(run, record)
        if outcome.alarms:
            alarm_txs += 1
            review_and_approve(run, outcome.index, bundle.config.admin)
            replay = run_transaction(run, record)
            if replay.alarms:
                raise WorkflowError(
                    f"tx {outcome.index} still alarms after approval"
                )
    return {"alarms": alarm_txs, "run": run}
