"""Contract container: function table, selector map, constant pool, call annotations."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

from .config import MAX_CODE_BYTES, Config
from .isa import JUMPS, TERMINATORS, Instruction, Op

HEADER_BYTES = 32
FUNCTION_ENTRY_BYTES = 8
# Every embedded path-set blob is a 14-byte header plus 8 bytes per entry.
BLOB_HEADER_BYTES = 14
BLOB_ENTRY_BYTES = 8


class Visibility(str, Enum):
    EXTERNAL = "external"
    INTERNAL = "internal"


class ValidationError(Exception):
    """Raised for structurally invalid programs or assembly sources."""


@dataclass
class CallsiteInfo:
    """Static annotation on a CALL/DELEGATECALL instruction.

    ``target`` names a protected contract when the callee is inside the
    protection boundary; ``callee_fn`` names the called function, or None
    when the selector is forwarded dynamically (fan-out to every external
    function of the target).
    """

    target: str | None = None
    callee_fn: str | None = None

    def to_json(self) -> dict:
        return {"target": self.target, "fn": self.callee_fn}

    @classmethod
    def from_json(cls, raw: dict) -> "CallsiteInfo":
        return cls(target=raw.get("target"), callee_fn=raw.get("fn"))


@dataclass
class FunctionDef:
    id: int
    name: str
    visibility: Visibility
    body: list[Instruction]
    entry_offset: int = 0

    def size_bytes(self, word_bytes: int) -> int:
        return sum(i.size(word_bytes) for i in self.body)


@dataclass
class ContractProgram:
    name: str
    functions: list[FunctionDef]
    selector_table: dict[int, int]  # selector word -> external function id
    fallback_id: int | None = None
    # Constant pool words, readable via CODELOAD. Entries are at most 2**64.
    data_pool: list[int] = field(default_factory=list)
    # Byte sizes of embedded path-set blobs backed by the pool (instrumented
    # programs only); they count toward byte_size.
    blob_bytes: int = 0
    # (function id, offset) -> CallsiteInfo for annotated external calls.
    callsites: dict[tuple[int, int], CallsiteInfo] = field(default_factory=dict)
    # Storage slots initialized at deployment (instrumented programs).
    storage_init: dict[int, int] = field(default_factory=dict)

    @property
    def byte_size(self) -> int:
        # word width is fixed per program at assembly; stored below
        return self._byte_size

    _byte_size: int = 0

    def compute_byte_size(self, word_bytes: int) -> int:
        code = sum(f.size_bytes(word_bytes) for f in self.functions)
        self._byte_size = (
            HEADER_BYTES + FUNCTION_ENTRY_BYTES * len(self.functions) + code + self.blob_bytes
        )
        return self._byte_size

    def function(self, fid: int) -> FunctionDef:
        return self.functions[fid]

    def function_by_name(self, name: str) -> FunctionDef:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(f"{self.name}: no function {name!r}")

    def external_functions(self) -> list[FunctionDef]:
        return [f for f in self.functions if f.visibility is Visibility.EXTERNAL]

    def selector_of(self, name: str) -> int | None:
        fid = self.function_by_name(name).id
        for sel, f in self.selector_table.items():
            if f == fid:
                return sel
        return None

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "functions": [
                {
                    "id": f.id,
                    "name": f.name,
                    "visibility": f.visibility.value,
                    "entry_offset": f.entry_offset,
                    "body": [[i.op.value, i.imm] for i in f.body],
                }
                for f in self.functions
            ],
            "selector_table": {hex(sel): fid for sel, fid in self.selector_table.items()},
            "fallback_id": self.fallback_id,
            "data_pool": [hex(w) for w in self.data_pool],
            "blob_bytes": self.blob_bytes,
            "callsites": {
                f"{fid}:{off}": info.to_json() for (fid, off), info in self.callsites.items()
            },
            "storage_init": {hex(k): hex(v) for k, v in self.storage_init.items()},
            "byte_size": self._byte_size,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "ContractProgram":
        prog = cls(
            name=raw["name"],
            functions=[
                FunctionDef(
                    id=f["id"],
                    name=f["name"],
                    visibility=Visibility(f["visibility"]),
                    body=[Instruction(Op(op), imm) for op, imm in f["body"]],
                    entry_offset=f.get("entry_offset", 0),
                )
                for f in raw["functions"]
            ],
            selector_table={int(s, 16): fid for s, fid in raw["selector_table"].items()},
            fallback_id=raw.get("fallback_id"),
            data_pool=[int(w, 16) for w in raw.get("data_pool", [])],
            blob_bytes=raw.get("blob_bytes", 0),
            callsites={
                (int(key.split(":")[0]), int(key.split(":")[1])): CallsiteInfo.from_json(info)
                for key, info in raw.get("callsites", {}).items()
            },
            storage_init={int(k, 16): int(v, 16) for k, v in raw.get("storage_init", {}).items()},
        )
        prog._byte_size = raw.get("byte_size", 0)
        return prog


def derive_selector(name: str, width: int) -> int:
    """Deterministic nonzero selector for a function lacking an explicit one.

    Selectors are 4-byte values truncated to the word width; zero is reserved
    for the fallback.
    """
    bits = min(32, width)
    digest = hashlib.sha256(name.encode()).digest()
    sel = int.from_bytes(digest[:4], "big") & ((1 << bits) - 1)
    return sel or 1


def validate_program(prog: ContractProgram, config: Config) -> None:
    """Structural validation; raises ValidationError on the first violation."""
    mask = config.mask
    names = set()
    for f in prog.functions:
        if f.id != prog.functions.index(f):
            raise ValidationError(f"{prog.name}.{f.name}: function id out of order")
        if f.name in names:
            raise ValidationError(f"{prog.name}: duplicate function {f.name!r}")
        names.add(f.name)
        if not f.body:
            raise ValidationError(f"{prog.name}.{f.name}: empty body")
        last = f.body[-1]
        if last.op not in TERMINATORS and last.op is not Op.JUMP:
            raise ValidationError(
                f"{prog.name}.{f.name}: body must end with a terminator or jump"
            )
        for off, instr in enumerate(f.body):
            if instr.imm is not None and not (0 <= instr.imm <= mask):
                if instr.op in JUMPS or instr.op is Op.ICALL:
                    pass  # range-checked below with better messages
                else:
                    raise ValidationError(
                        f"{prog.name}.{f.name}@{off}: immediate {instr.imm} "
                        f"exceeds word width {config.width}"
                    )
            if instr.op in JUMPS:
                tgt = instr.imm
                if not (0 <= tgt < len(f.body)):
                    raise ValidationError(
                        f"{prog.name}.{f.name}@{off}: invalid jump target {tgt}"
                    )
                if f.body[tgt].op is not Op.JUMPDEST:
                    raise ValidationError(
                        f"{prog.name}.{f.name}@{off}: invalid jump target "
                        f"{tgt} (not a JUMPDEST)"
                    )
            if instr.op is Op.ICALL and not (0 <= instr.imm < len(prog.functions)):
                raise ValidationError(
                    f"{prog.name}.{f.name}@{off}: ICALL to unknown function {instr.imm}"
                )
    for sel, fid in prog.selector_table.items():
        fn = prog.functions[fid]
        if fn.visibility is not Visibility.EXTERNAL:
            raise ValidationError(f"{prog.name}: selector maps to internal {fn.name!r}")
        if sel == 0:
            raise ValidationError(f"{prog.name}: selector 0 is reserved for the fallback")
    if prog.fallback_id is not None:
        fb = prog.functions[prog.fallback_id]
        if fb.visibility is not Visibility.EXTERNAL:
            raise ValidationError(f"{prog.name}: fallback must be external")
    prog.compute_byte_size(config.word_bytes)


class SizeLimitExceeded(Exception):
    def __init__(self, name: str, size: int):
        super().__init__(f"{name}: {size} bytes exceeds the {MAX_CODE_BYTES}-byte limit")
        self.size = size
