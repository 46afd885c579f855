"""Whole-bundle analysis: per-function graphs, labelings, callsite ids, fingerprints."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .callgraph import CallGraph, K_ENTRY, acyclicize_callgraph, build_call_graph
from .ccp import CcLabeling, label_ccp
from .cfg import Cfg, acyclicize, build_cfg, insert_virtual_branches
from .config import Config, DEFAULT_CONFIG
from .epp import EppLabeling, IndexSpaceOverflow, label_epp
from .isa import EXTERNAL_CALLS
from .program import ContractProgram

Site = tuple[str, int, int]  # (contract, function id, offset)


@dataclass
class BundleAnalysis:
    programs: dict[str, ContractProgram]
    boundary: set[str]
    config: Config
    cfgs: dict[tuple[str, int], Cfg] = field(default_factory=dict)
    epp: dict[tuple[str, int], EppLabeling] = field(default_factory=dict)
    callgraph: CallGraph | None = None
    ccp: CcLabeling | None = None
    site_gid: dict[Site, int] = field(default_factory=dict)

    def num_paths(self, contract: str, fid: int) -> int:
        return self.epp[(contract, fid)].total_paths

    def num_ccs(self, contract: str, fid: int) -> int:
        return self.ccp.num_ccs[(contract, fid)]

    def index_space(self, contract: str, fid: int) -> int:
        return self.num_paths(contract, fid) * self.num_ccs(contract, fid)

    def entry_sval(self, contract: str, fid: int) -> int:
        for e in self.callgraph.in_edges((contract, fid)):
            if e.kind == K_ENTRY:
                return self.ccp.call_val[e.ceid]
        raise KeyError(f"{contract}.{fid} has no entry edge")

    def fingerprint(self) -> str:
        data = {
            "boundary": sorted(self.boundary),
            "width": self.config.width,
            "epp": {
                f"{c}:{f}": lab.fingerprint_data() for (c, f), lab in sorted(self.epp.items())
            },
            "ccp": self.ccp.fingerprint_data(),
            "sites": {f"{s[0]}:{s[1]}:{s[2]}": g for s, g in sorted(self.site_gid.items())},
        }
        blob = json.dumps(data, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def analyze_bundle(
    programs: dict[str, ContractProgram],
    boundary: set[str] | None = None,
    config: Config = DEFAULT_CONFIG,
) -> BundleAnalysis:
    """Run the full analysis pipeline over every protected contract."""
    boundary = set(boundary) if boundary is not None else set(programs)
    ba = BundleAnalysis(programs=programs, boundary=boundary, config=config)
    for name in programs:
        if name not in boundary:
            continue
        prog = programs[name]
        for fn in prog.functions:
            cfg = insert_virtual_branches(acyclicize(build_cfg(fn)), fn)
            ba.cfgs[(name, fn.id)] = cfg
            ba.epp[(name, fn.id)] = label_epp(cfg, config.width)
    cg = acyclicize_callgraph(build_call_graph(programs, boundary))
    ba.callgraph = cg
    ba.ccp = label_ccp(cg, config.width)
    # dense callsite ids for annotated protected external callsites
    sites = sorted(
        {
            e.site
            for e in cg.edges
            if e.site
            and programs[e.site[0]].functions[e.site[1]].body[e.site[2]].op in EXTERNAL_CALLS
        }
    )
    ba.site_gid = {site: gid for gid, site in enumerate(sites)}
    # combined index space must leave sign headroom in a machine word
    for (name, fid), lab in ba.epp.items():
        space = lab.total_paths * ba.ccp.num_ccs[(name, fid)]
        if space > 1 << (config.width - 1):
            raise IndexSpaceOverflow(
                f"{name}.fn{fid}: combined index space {space} exceeds "
                f"2**{config.width - 1}"
            )
    return ba
