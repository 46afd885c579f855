"""Trace oracle: replays an uninstrumented execution trace through the
labeled graphs and emits the sequence of (contract, function, combined index)
pairs that instrumented code would check.

This is the independent reference implementation for the profiling
equivalence tests and the source of truth during training. It mirrors the
wrapper's entry classification (marker, direct, foreign, reentrant), the
ctx-slot persistence around unprotected calls, and the path decomposition at
backedges; membership outcomes are irrelevant here, only the checked pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .bundle import BundleAnalysis
from .callgraph import K_SURROGATE
from .cfg import Cfg, EXIT, VIRTUAL_FALSE, VIRTUAL_TRUE
from .guardcode import (
    SLOT_EMPTY,
    band_direct,
    band_foreign,
    band_reentrant,
    marker_ctx,
    slot_decode,
    slot_encode,
)
from .isa import EXTERNAL_CALLS, Op
from .vm import Receipt, STATUS_ACCEPTED, TraceEvent

Pair = tuple[int, str, int, int]  # (self address, code name, function id, combined)


class TraceMismatch(AssertionError):
    """The trace does not fit the labeled graphs (malformed or stale)."""


@dataclass
class _IFrame:
    fid: int
    cfg: Cfg
    lab: object
    vertex: int | None = None
    epp: int = 0


@dataclass
class _Frame:
    self_addr: int
    code: str | None  # None marks an unprotected frame
    ctx: int = 0
    aborted: bool = False
    istack: list[_IFrame] = field(default_factory=list)
    ctx_saves: list[int] = field(default_factory=list)
    slot_saves: list[tuple[int, int]] = field(default_factory=list)

    @property
    def top(self) -> _IFrame | None:
        return self.istack[-1] if self.istack else None


class TraceOracle:
    def __init__(self, analysis: BundleAnalysis):
        self.analysis = analysis
        self.config = analysis.config
        self.boundary = analysis.boundary
        # (code, fid, offset) -> (value, via_surrogate) for internal calls
        self.icall_edges: dict[tuple[str, int, int], tuple[int, bool]] = {}
        # (site, callee node) -> (value, via_surrogate) for protected calls
        self.ext_edges: dict[tuple, tuple[int, bool]] = {}
        cg = analysis.callgraph
        for e in cg.edges:
            if not e.site:
                continue
            op = analysis.programs[e.site[0]].functions[e.site[1]].body[e.site[2]].op
            surrogate = e.kind == K_SURROGATE
            val = analysis.ccp.call_val[e.ceid]
            if op in EXTERNAL_CALLS:
                self.ext_edges[(e.site, e.callee)] = (val, surrogate)
            else:
                self.icall_edges[e.site] = (val, surrogate)

    # -- public ------------------------------------------------------------

    def pairs(self, trace: list[TraceEvent], status: str = STATUS_ACCEPTED) -> list[Pair]:
        """Checked pairs for one transaction's uninstrumented trace."""
        self.out: list[Pair] = []
        self.frames: list[_Frame] = []
        self.slots: dict[int, int] = {}
        for ev in trace:
            handler = getattr(self, f"_on_{ev.kind}", None)
            if handler:
                handler(ev)
        # transaction-entry frame returns when the trace ends
        if self.frames:
            frame = self.frames.pop()
            if self.frames:
                raise TraceMismatch("unbalanced call frames at end of trace")
            if status == STATUS_ACCEPTED and not frame.aborted and frame.code:
                self._emit_exit(frame)
        return self.out

    # -- frame plumbing -------------------------------------------------------

    def _protected(self, code: str | None) -> bool:
        return code in self.boundary

    def _enter_function(self, frame: _Frame, fid: int) -> None:
        key = (frame.code, fid)
        cfg = self.analysis.cfgs[key]
        lab = self.analysis.epp[key]
        frame.istack.append(_IFrame(fid, cfg, lab, None, lab.entry_val))

    def _block_at(self, cfg: Cfg, start: int) -> int:
        for b in cfg.blocks.values():
            if b.start == start and not b.empty:
                return b.bid
        raise TraceMismatch(f"{cfg.fn_name}: no block at offset {start}")

    def _emit(self, frame: _Frame, iframe: _IFrame, epp: int) -> None:
        num_paths = iframe.lab.total_paths
        combined = (frame.ctx * num_paths + epp) & self.config.mask
        self.out.append((frame.self_addr, frame.code, iframe.fid, combined))

    def _emit_exit(self, frame: _Frame) -> None:
        """Close the final pending path of the frame's active function."""
        iframe = frame.top if frame.istack else None
        if iframe is None or iframe.vertex is None:
            return
        term = [
            e
            for e in iframe.cfg.out_edges(iframe.vertex)
            if e.origin and e.origin[0] == "term"
        ]
        if len(term) != 1:
            raise TraceMismatch(
                f"{iframe.cfg.fn_name}: frame ended away from a terminator"
            )
        off = term[0].origin[1]
        prog = self.analysis.programs[frame.code]
        if prog.functions[iframe.fid].body[off].op is Op.REVERT:
            return  # reverting exits emit no check
        self._emit(frame, iframe, iframe.epp + iframe.lab.edge_val[term[0].eid])

    # -- event handlers ---------------------------------------------------------

    def _on_BlockEnter(self, ev: TraceEvent) -> None:
        code = ev.get("code")
        if not self.frames:
            # transaction entry: markerless, slot empty, caller is the origin
            frame = _Frame(ev.contract, code if self._protected(code) else None)
            self.frames.append(frame)
            if frame.code:
                sval = self.analysis.entry_sval(code, ev.fn)
                frame.ctx = band_direct(sval)
                self._enter_function(frame, ev.fn)
        frame = self.frames[-1]
        if not frame.code or frame.aborted:
            return
        iframe = frame.top
        if iframe is None or iframe.fid != ev.fn:
            raise TraceMismatch(f"unexpected BlockEnter in fn {ev.fn}")
        if iframe.vertex is None:
            if ev.offset != 0:
                raise TraceMismatch("function did not start at offset 0")
            iframe.vertex = self._block_at(iframe.cfg, 0)
            return
        cfg, lab = iframe.cfg, iframe.lab
        for e in cfg.out_edges(iframe.vertex):
            if e.kind == "real" and e.dst != EXIT:
                dst = cfg.blocks[e.dst]
                if not dst.empty and dst.start == ev.offset:
                    iframe.epp += lab.edge_val[e.eid]
                    iframe.vertex = e.dst
                    return
        # not a DAG edge: must be a recorded backedge
        src_block = cfg.blocks[iframe.vertex]
        if (src_block.end - 1, ev.offset) in cfg.backedges:
            exit_val = lab.exit_val.get(iframe.vertex, 0)
            self._emit(self.frames[-1], iframe, iframe.epp + exit_val)
            target = self._block_at(cfg, ev.offset)
            iframe.epp = lab.reset_val[target]
            iframe.vertex = target
            return
        if not src_block.empty and src_block.start == ev.offset:
            # confirmation of a vertex already entered through a virtual
            # edge (external call return); DAGs have no self edges
            return
        raise TraceMismatch(
            f"{cfg.fn_name}: no edge from block {iframe.vertex} to offset {ev.offset}"
        )

    def _on_ArithChecked(self, ev: TraceEvent) -> None:
        frame = self._active()
        if frame is None:
            return
        iframe = frame.top
        want = VIRTUAL_TRUE if ev.get("overflow") else VIRTUAL_FALSE
        for e in iframe.cfg.out_edges(iframe.vertex):
            if e.kind == want and e.origin[0] == "arith" and e.origin[1] == ev.offset:
                iframe.epp += iframe.lab.edge_val[e.eid]
                iframe.vertex = e.dst
                return
        raise TraceMismatch(f"no virtual arith edge at offset {ev.offset}")

    def _on_CallEnter(self, ev: TraceEvent) -> None:
        frame = self._active()
        if frame is None:
            return
        site = (frame.code, ev.fn, ev.offset)
        val, surrogate = self.icall_edges[site]
        if surrogate:
            frame.ctx_saves.append(frame.ctx)
            frame.ctx = val & self.config.mask
        else:
            frame.ctx = (frame.ctx + val) & self.config.mask
        self._enter_function(frame, ev.get("callee"))

    def _on_CallReturn(self, ev: TraceEvent) -> None:
        frame = self._active()
        if frame is None:
            return
        iframe = frame.istack.pop()
        # the IRET's terminator edge closes the callee's last path
        term = [
            e for e in iframe.cfg.out_edges(iframe.vertex) if e.origin and e.origin[0] == "term"
        ]
        if len(term) != 1:
            raise TraceMismatch(f"{iframe.cfg.fn_name}: CallReturn away from IRET")
        self._emit(frame, iframe, iframe.epp + iframe.lab.edge_val[term[0].eid])
        # undo the context delta; the call site is the caller's current
        # vertex terminator (an ICALL instruction)
        caller = frame.istack[-1]
        icall_off = caller.cfg.blocks[caller.vertex].end - 1
        val, surrogate = self.icall_edges[(frame.code, caller.fid, icall_off)]
        if surrogate:
            frame.ctx = frame.ctx_saves.pop()
        else:
            frame.ctx = (frame.ctx - val) & self.config.mask

    def _on_ExternalCallEnter(self, ev: TraceEvent) -> None:
        caller = self.frames[-1] if self.frames else None
        code = ev.get("code")
        kind = ev.get("kind")
        fid = ev.get("fn")
        target = ev.get("target")
        self_addr = caller.self_addr if kind == "delegatecall" else target
        site = (caller.code, ev.fn, ev.offset) if caller and caller.code else None
        protected_site = site is not None and self._site_protected(site)

        # caller side: persist ctx across calls leaving the boundary
        if caller and caller.code and not caller.aborted and not protected_site:
            prev = self.slots.get(caller.self_addr, SLOT_EMPTY)
            caller.slot_saves.append((caller.self_addr, prev))
            self.slots[caller.self_addr] = slot_encode(caller.ctx, self.config.width)

        if fid is None or not self._protected(code):
            self.frames.append(_Frame(self_addr, None))
            return
        frame = _Frame(self_addr, code)
        num_ccs = self.analysis.num_ccs(code, fid)
        if protected_site and not caller.aborted:
            edge = self.ext_edges.get((site, (code, fid)))
            if edge is not None:
                val, surrogate = edge
                frame.ctx = marker_ctx(caller.ctx, val, surrogate, self.config.width)
            else:
                frame.ctx = caller.ctx  # unknown pairing: base alone
        else:
            stored = self.slots.get(self_addr, SLOT_EMPTY)
            if stored != SLOT_EMPTY:
                frame.ctx = band_reentrant(
                    slot_decode(stored, self.config.width), num_ccs, self.config.width
                )
            else:
                # nested frames are entered by a contract, never the origin
                sval = self.analysis.entry_sval(code, fid)
                frame.ctx = band_foreign(num_ccs, sval) & self.config.mask
        self.frames.append(frame)
        self._enter_function(frame, fid)

    def _on_ExternalCallReturn(self, ev: TraceEvent) -> None:
        success = ev.get("success")
        callee = self.frames.pop() if len(self.frames) > 1 else None
        if callee and callee.code and success and not callee.aborted:
            self._emit_exit(callee)
        caller = self.frames[-1] if self.frames else None
        if caller is None or not caller.code or caller.aborted:
            return
        # restore the persisted slot if this was an unprotected-site call
        site = (caller.code, ev.fn, ev.offset)
        if not self._site_protected(site):
            addr, prev = caller.slot_saves.pop()
            self.slots[addr] = prev
        # virtual branch on the success flag
        iframe = caller.top
        want = VIRTUAL_FALSE if success else VIRTUAL_TRUE
        for e in iframe.cfg.out_edges(iframe.vertex):
            if e.kind == want and e.origin[0] == "callret" and e.origin[1] == ev.offset:
                iframe.epp += iframe.lab.edge_val[e.eid]
                iframe.vertex = e.dst
                return
        raise TraceMismatch(f"no virtual callret edge at offset {ev.offset}")

    def _on_Revert(self, ev: TraceEvent) -> None:
        if self.frames:
            self.frames[-1].aborted = True
            self.frames[-1].istack.clear()

    # -- misc ------------------------------------------------------------------

    def _active(self) -> _Frame | None:
        if not self.frames:
            return None
        frame = self.frames[-1]
        if not frame.code or frame.aborted or not frame.istack:
            return None
        return frame

    def _site_protected(self, site: tuple) -> bool:
        prog = self.analysis.programs.get(site[0])
        if prog is None:
            return False
        info = prog.callsites.get((site[1], site[2]))
        return info is not None and info.target in self.boundary


def trace_oracle(
    trace: list[TraceEvent], analysis: BundleAnalysis, status: str = STATUS_ACCEPTED
) -> list[Pair]:
    return TraceOracle(analysis).pairs(trace, status)


def checked_pairs_from_receipt(receipt: Receipt) -> list[Pair]:
    """The instrumented run's check sequence, read off PathChecked events."""
    return [
        (ev.contract, ev.get("code"), ev.fn, ev.get("combined"))
        for ev in receipt.trace
        if ev.kind == "PathChecked"
    ]
