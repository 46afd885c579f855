"""Assembler/disassembler: round trips, validation errors, sizes."""

import pytest

from pathguard.asm import AsmError, assemble, disassemble
from pathguard.config import Config
from pathguard.program import ValidationError, derive_selector


def test_minimal_contract_byte_size():
    prog = assemble("contract one { fn f external { STOP } }")
    # 32-byte header + one 8-byte function entry + one opcode byte
    assert prog.byte_size == 32 + 8 + 1
    assert len(prog.functions) == 1


def test_invalid_jump_target_rejected():
    with pytest.raises(ValidationError, match="invalid jump target"):
        assemble(
            """
            contract t { fn f external {
              there: PUSH 1
                     POP
                     JUMP there   ; target is not a JUMPDEST
            } }
            """
        )


def test_undefined_label():
    with pytest.raises(AsmError, match="undefined label"):
        assemble("contract t { fn f external { JUMP nowhere STOP } }")


def test_selector_collision():
    with pytest.raises(AsmError, match="selector collision"):
        assemble(
            "contract t { fn a external selector=0x7 { STOP } "
            "fn b external selector=0x7 { STOP } }"
        )


def test_syntax_error_carries_line():
    src = "contract t {\n fn f external {\n   BOGUS\n } }"
    with pytest.raises(AsmError, match="line 3"):
        assemble(src)


def test_immediate_must_fit_word():
    with pytest.raises(ValidationError, match="exceeds word width"):
        assemble("contract t { fn f external { PUSH 0x1ff POP STOP } }", Config(width=8))


def test_round_trip_fixtures(loopy, diamond, figcg):
    for prog in (loopy, diamond, figcg):
        again = assemble(disassemble(prog))
        assert again.to_json() == prog.to_json()


def test_round_trip_annotations():
    src = """
    contract a { fn f external {
      PUSH 0
      PUSH 0x22
      PUSH 0
      PUSH 0x101
      CALL target=b fn=g
      POP
      STOP
    } }
    """
    prog = assemble(src)
    again = assemble(disassemble(prog))
    assert again.to_json() == prog.to_json()
    assert again.callsites[(0, 4)].target == "b"
    assert again.callsites[(0, 4)].callee_fn == "g"


def test_fallback_only_contract():
    prog = assemble("contract t { fn fallback external { STOP } }")
    assert prog.fallback_id == 0
    assert prog.selector_table == {}
    text = disassemble(prog)
    assert text.count("fn ") == 1


def test_derived_selectors_deterministic_and_nonzero():
    a = derive_selector("withdraw", 64)
    assert a == derive_selector("withdraw", 64)
    assert a != 0
    assert derive_selector("deposit", 8) < 256


def test_body_must_terminate():
    with pytest.raises(ValidationError, match="terminator"):
        assemble("contract t { fn f external { PUSH 1 POP } }")
