"""Vulnerability scenario corpus: contracts, training streams, attacks.

Each scenario bundles contracts in the toolkit's assembly, a protection
boundary, deterministic world setup, generators for behaviorally distinct
normal transactions, and an attack subsequence whose last transaction is the
one expected to raise the alarm. The normal generators only produce
non-reverting transactions (training assumes a passing test suite) and track
enough world state to stay valid at any point in a random stream.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .workflow import Bundle

VAULT_SRC = """
contract vault {
  fn deposit external selector=0x11 {
    CALLER
    SLOAD
    CALLVALUE
    ADD
    CALLER
    SSTORE
    STOP
  }
  fn withdraw external selector=0x12 {
    CALLER
    SLOAD
    DUP 1
    ISZERO
    JUMPI empty
    PUSH 0
    PUSH 0
    DUP 3
    CALLER
    CALL
    POP
    PUSH 0
    CALLER
    SSTORE
    POP
    STOP
  empty: JUMPDEST
    POP
    STOP
  }
}
"""

THIEF_SRC = """
contract thief {
  fn set external selector=0x01 {
    PUSH 0
    CALLDATALOAD
    PUSH 0
    SSTORE
    STOP
  }
  fn attack external selector=0x02 {
    PUSH 0
    PUSH 0x11
    PUSH 1
    PUSH 0
    SLOAD
    CALL
    POP
    PUSH 0
    PUSH 0x12
    PUSH 0
    PUSH 0
    SLOAD
    CALL
    POP
    STOP
  }
  fn fallback external {
    PUSH 1
    SLOAD
    JUMPI done
    PUSH 1
    PUSH 1
    SSTORE
    PUSH 0
    PUSH 0x12
    PUSH 0
    PUSH 0
    SLOAD
    CALL
    POP
  done: JUMPDEST
    STOP
  }
}
"""

HELPER_WALLET_SRC = """
contract helper {
  fn set external selector=0x01 {
    PUSH 0
    CALLDATALOAD
    PUSH 0
    SSTORE
    STOP
  }
  fn deposit_via external selector=0x21 {
    PUSH 0
    PUSH 0x11
    CALLVALUE
    PUSH 0
    SLOAD
    CALL
    POP
    STOP
  }
  fn withdraw_via external selector=0x22 {
    PUSH 0
    PUSH 0x12
    PUSH 0
    PUSH 0
    SLOAD
    CALL
    POP
    STOP
  }
  fn fallback external {
    STOP
  }
}
"""

PROXY_SRC = """
contract proxy {
  fn set_lib external selector=0x3f {
    PUSH 0
    CALLDATALOAD
    PUSH 2
    SSTORE
    STOP
  }
  fn fallback external {
    PUSH 0
    PUSH 0
    CALLDATALOAD
    PUSH 2
    SLOAD
    DELEGATECALL target=dlib
    POP
    STOP
  }
}
"""

DLIB_SRC = """
contract dlib {
  fn init external selector=0x31 {
    CALLER
    PUSH 0
    SSTORE
    STOP
  }
  fn work external selector=0x32 {
    PUSH 1
    SLOAD
    PUSH 1
    ADD
    PUSH 1
    SSTORE
    STOP
  }
}
"""

TOKEN8_SRC = """
contract token8 {
  fn mint external selector=0x41 {
    ORIGIN
    PUSH 1
    EQ
    JUMPI ok
    PUSH 0
    REVERT
  ok: JUMPDEST
    PUSH 0
    CALLDATALOAD
    DUP 1
    SLOAD
    PUSH 1
    CALLDATALOAD
    ADD
    SWAP 1
    SSTORE
    STOP
  }
  fn transfer external selector=0x42 {
    CALLER
    SLOAD
    DUP 1
    PUSH 1
    CALLDATALOAD
    LT
    JUMPI poor
    PUSH 1
    CALLDATALOAD
    SUB
    CALLER
    SSTORE
    PUSH 0
    CALLDATALOAD
    DUP 1
    SLOAD
    PUSH 1
    CALLDATALOAD
    ADD
    SWAP 1
    SSTORE
    STOP
  poor: JUMPDEST
    POP
    PUSH 0
    REVERT
  }
  fn batch external selector=0x43 {
    PUSH 2
    CALLDATALOAD
    PUSH 2
    MUL
    CALLER
    SLOAD
    DUP 2
    LT
    JUMPI poor
    CALLER
    SLOAD
    SWAP 1
    SUB
    CALLER
    SSTORE
    PUSH 0
    CALLDATALOAD
    DUP 1
    SLOAD
    PUSH 2
    CALLDATALOAD
    ADD
    SWAP 1
    SSTORE
    PUSH 1
    CALLDATALOAD
    DUP 1
    SLOAD
    PUSH 2
    CALLDATALOAD
    ADD
    SWAP 1
    SSTORE
    STOP
  poor: JUMPDEST
    POP
    PUSH 0
    REVERT
  }
}
"""

KOTH_SRC = """
contract koth {
  fn claim external selector=0x51 {
    CALLVALUE
    PUSH 0
    SLOAD
    LT
    JUMPI cheap
    PUSH 0
    PUSH 0
    PUSH 0
    SLOAD
    PUSH 1
    SLOAD
    CALL
    POP
    CALLER
    PUSH 1
    SSTORE
    CALLVALUE
    PUSH 0
    SSTORE
    STOP
  cheap: JUMPDEST
    PUSH 0
    REVERT
  }
}
"""

GRIEFER_SRC = """
contract griefer {
  fn set external selector=0x01 {
    PUSH 0
    CALLDATALOAD
    PUSH 0
    SSTORE
    STOP
  }
  fn claim_via external selector=0x61 {
    PUSH 0
    PUSH 0x51
    CALLVALUE
    PUSH 0
    SLOAD
    CALL
    POP
    STOP
  }
  fn fallback external {
    PUSH 0
    REVERT
  }
}
"""

KWALLET_SRC = """
contract kwallet {
  fn set external selector=0x01 {
    PUSH 0
    CALLDATALOAD
    PUSH 0
    SSTORE
    STOP
  }
  fn claim_via external selector=0x61 {
    PUSH 0
    PUSH 0x51
    CALLVALUE
    PUSH 0
    SLOAD
    CALL
    POP
    STOP
  }
  fn fallback external {
    STOP
  }
}
"""

OWALLET_SRC = """
contract owallet {
  fn init external selector=0x70 {
    PUSH 0
    SLOAD
    JUMPI done
    PUSH 0
    CALLDATALOAD
    PUSH 0
    SSTORE
  done: JUMPDEST
    STOP
  }
  fn pay external selector=0x71 {
    ORIGIN
    PUSH 0
    SLOAD
    EQ
    JUMPI ok
    PUSH 0
    REVERT
  ok: JUMPDEST
    PUSH 0
    PUSH 0
    PUSH 1
    CALLDATALOAD
    PUSH 0
    CALLDATALOAD
    CALL
    POP
    STOP
  }
  fn fallback external {
    STOP
  }
}
"""

PHISHER_SRC = """
contract phisher {
  fn set external selector=0x01 {
    PUSH 0
    CALLDATALOAD
    PUSH 0
    SSTORE
    STOP
  }
  fn fallback external {
    PUSH 50
    PUSH 0xBAD
    PUSH 2
    PUSH 0x71
    PUSH 0
    PUSH 0
    SLOAD
    CALL
    POP
    STOP
  }
}
"""

REGISTRY_SRC = """
contract registry {
  fn init external selector=0x80 {
    PUSH 0
    SLOAD
    JUMPI done
    PUSH 0
    CALLDATALOAD
    PUSH 0
    SSTORE
  done: JUMPDEST
    STOP
  }
  fn promote external selector=0x81 {
    PUSH 0
    CALLDATALOAD
    ICALL impl
    STOP
  }
  fn governed external selector=0x83 {
    ORIGIN
    PUSH 0
    SLOAD
    EQ
    JUMPI ok
    PUSH 0
    REVERT
  ok: JUMPDEST
    PUSH 0
    CALLDATALOAD
    ICALL impl
    STOP
  }
  fn impl internal {
    PUSH 0
    SSTORE
    IRET
  }
  fn read external selector=0x84 {
    PUSH 0
    SLOAD
    PUSH 1
    RETURN
  }
}
"""

GATE_SRC = """
contract gate {
  fn grant external selector=0x91 {
    PUSH 0
    CALLDATALOAD
    PUSH 5
    GT
    PUSH 1
    CALLDATALOAD
    ISZERO
    ISZERO
    OR
    JUMPI allow
    STOP
  allow: JUMPDEST
    PUSH 1
    PUSH 3
    SSTORE
    STOP
  }
}
"""


def _tx(origin, to, fn, calldata=(), value=0):
    return {
        "origin": origin,
        "to": to,
        "fn": fn,
        "calldata": list(calldata),
        "value": value,
    }


@dataclass
class Scenario:
    """One vulnerability program with its corpus generators."""

    name: str
    bundle_json: dict
    training: list[dict]
    normal_shapes: list  # callables (rng, state) -> tx record or None
    attack: list[dict]  # subsequence; the last record raises the alarm
    detected: bool = True  # criterion flips for the logic-error fixture
    guard_reverts_tx: bool = True  # protected entry: whole tx rolls back
    state_factory: type | None = None

    def bundle(self) -> Bundle:
        return Bundle.from_json(self.bundle_json)

    def fresh_state(self):
        return self.state_factory() if self.state_factory else None

    def sample_normal(self, rng: random.Random, state) -> dict:
        while True:
            shape = rng.choice(self.normal_shapes)
            record = shape(rng, state)
            if record is not None:
                return record

    def test_sequence(self, rng: random.Random, length: int = 100):
        """Normal stream with the attack in the last tenth, as one sequence.

        Returns (records, alarm_index): records has exactly ``length``
        transactions including the attack subsequence; the alarm is expected
        at ``alarm_index``.
        """
        state = self.fresh_state()
        normals = [self.sample_normal(rng, state) for _ in range(length - len(self.attack))]
        cut = rng.randint(int(0.9 * length), len(normals))
        records = normals[:cut] + list(self.attack) + normals[cut:]
        alarm_index = cut + len(self.attack) - 1
        return records, alarm_index


# -- reentrancy -----------------------------------------------------------------


class _VaultState:
    def __init__(self):
        self.balances = {1: 0, 2: 0, 3: 0, 0x102: 0}  # helper wallet at 0x102


def _vault_deposit(rng, st):
    user = rng.choice([1, 2, 3])
    amount = rng.randint(1, 40)
    st.balances[user] += amount
    return _tx(user, "vault", "deposit", value=amount)


def _vault_withdraw(rng, st):
    user = rng.choice([1, 2, 3])
    st.balances[user] = 0
    return _tx(user, "vault", "withdraw")


def _vault_deposit_via(rng, st):
    user = rng.choice([1, 2, 3])
    amount = rng.randint(1, 40)
    st.balances[0x102] += amount
    return _tx(user, "helper", "deposit_via", value=amount)


def _vault_withdraw_via(rng, st):
    st.balances[0x102] = 0
    return _tx(rng.choice([1, 2, 3]), "helper", "withdraw_via")


REENTRANCY = Scenario(
    name="reentrancy",
    bundle_json={
        "contracts": [
            {"source": VAULT_SRC},
            {"source": THIEF_SRC},
            {"source": HELPER_WALLET_SRC},
        ],
        "boundary": ["vault"],
        "deploy": ["vault", "thief", "helper"],  # 0x100, 0x101, 0x102
        "accounts": [
            {"address": "0x1", "balance": 10000},
            {"address": "0x2", "balance": 10000},
            {"address": "0x3", "balance": 10000},
            {"address": "0xBAD", "balance": 10000},
            {"address": "0x101", "balance": 100},
        ],
        "setup": [
            _tx("0xBAD", "thief", "set", ["@vault"]),
            _tx(1, "helper", "set", ["@vault"]),
            # cover every behavioral shape once so random streams stay clean
            _tx(1, "vault", "deposit", value=5),
            _tx(1, "vault", "withdraw"),
            _tx(2, "vault", "withdraw"),  # empty-balance path
            _tx(2, "helper", "deposit_via", value=5),
            _tx(2, "helper", "withdraw_via"),
            _tx(3, "helper", "withdraw_via"),  # empty via wallet
        ],
    },
    training=[
        _tx(1, "vault", "deposit", value=7),
        _tx(2, "vault", "deposit", value=3),
        _tx(1, "vault", "withdraw"),
        _tx(3, "vault", "withdraw"),
        _tx(3, "helper", "deposit_via", value=9),
        _tx(1, "helper", "withdraw_via"),
        _tx(1, "helper", "withdraw_via"),
    ],
    normal_shapes=[_vault_deposit, _vault_withdraw, _vault_deposit_via, _vault_withdraw_via],
    attack=[_tx("0xBAD", "thief", "attack")],
    guard_reverts_tx=False,  # the attack enters through the attacker contract
    state_factory=_VaultState,
)


# -- dangerous delegatecall --------------------------------------------------------


def _proxy_work(rng, st):
    return _tx(rng.choice([1, 2, 3]), "proxy", "fallback", [0x32])


DELEGATECALL = Scenario(
    name="delegatecall",
    bundle_json={
        "contracts": [{"source": PROXY_SRC}, {"source": DLIB_SRC}],
        "boundary": ["proxy", "dlib"],
        "deploy": ["proxy", "dlib"],
        "accounts": [
            {"address": "0x1", "balance": 1000},
            {"address": "0x2", "balance": 1000},
            {"address": "0x3", "balance": 1000},
            {"address": "0xBAD", "balance": 1000},
        ],
        "setup": [
            _tx(1, "proxy", "set_lib", ["@dlib"]),
            _tx(1, "proxy", "fallback", [0x32]),
        ],
    },
    training=[
        _tx(2, "proxy", "fallback", [0x32]),
        _tx(3, "proxy", "fallback", [0x32]),
    ],
    normal_shapes=[_proxy_work],
    attack=[_tx("0xBAD", "proxy", "fallback", [0x31])],
)


# -- arithmetic overflow (8-bit token) ------------------------------------------------


class _TokenState:
    # balances after the setup stream: mints of 60 each, then 1 pays 2 five
    # and batches four to both others
    def __init__(self):
        self.balances = {1: 47, 2: 69, 3: 64}


def _token_mint(rng, st):
    user = rng.choice([1, 2, 3])
    amount = rng.randint(1, 30)
    if st.balances[user] + amount > 200:
        return None
    st.balances[user] += amount
    return _tx(1, "token8", "mint", [user, amount])


def _token_transfer(rng, st):
    src = rng.choice([u for u in (1, 2, 3) if st.balances[u] > 0] or [None])
    if src is None:
        return None
    dst = rng.choice([u for u in (1, 2, 3) if u != src])
    amount = rng.randint(1, st.balances[src])
    if st.balances[dst] + amount > 250:
        return None
    st.balances[src] -= amount
    st.balances[dst] += amount
    return _tx(src, "token8", "transfer", [dst, amount])


def _token_batch(rng, st):
    src = rng.choice([u for u in (1, 2, 3) if st.balances[u] >= 2] or [None])
    if src is None:
        return None
    others = [u for u in (1, 2, 3) if u != src]
    amount = rng.randint(1, st.balances[src] // 2)
    if any(st.balances[d] + amount > 250 for d in others):
        return None
    st.balances[src] -= 2 * amount
    for d in others:
        st.balances[d] += amount
    return _tx(src, "token8", "batch", [others[0], others[1], amount])


OVERFLOW = Scenario(
    name="overflow",
    bundle_json={
        "config": {"word_width": 8},
        "contracts": [{"source": TOKEN8_SRC}],
        "boundary": ["token8"],
        "deploy": ["token8"],
        "accounts": [
            {"address": "0x1", "balance": 200},
            {"address": "0x2", "balance": 200},
            {"address": "0x3", "balance": 200},
            {"address": "0xB", "balance": 200},
        ],
        "setup": [
            _tx(1, "token8", "mint", [1, 60]),
            _tx(1, "token8", "mint", [2, 60]),
            _tx(1, "token8", "mint", [3, 60]),
            _tx(1, "token8", "transfer", [2, 5]),
            _tx(1, "token8", "batch", [2, 3, 4]),
        ],
    },
    training=[
        _tx(2, "token8", "transfer", [3, 7]),
        _tx(3, "token8", "batch", [1, 2, 6]),
        _tx(1, "token8", "mint", [1, 9]),
    ],
    normal_shapes=[_token_mint, _token_transfer, _token_batch],
    # amount 0x80 doubles to 0x100 = 0 mod 256: zero-cost credits of 128 each
    attack=[_tx(0xB, "token8", "batch", [0xB, 2, 0x80])],
    state_factory=_TokenState,
)


# -- unchecked send (king of the hill) -------------------------------------------------


class _KothState:
    def __init__(self):
        self.price = 8  # the last setup claim


def _koth_claim(rng, st):
    user = rng.choice([1, 2, 3])
    value = st.price + rng.randint(1, 10)
    st.price = value
    return _tx(user, "koth", "claim", value=value)


def _koth_claim_via(rng, st):
    user = rng.choice([1, 2, 3])
    value = st.price + rng.randint(1, 10)
    st.price = value
    return _tx(user, "kwallet", "claim_via", value=value)


def _koth_attack(price_jump: int) -> list[dict]:
    # the griefer takes the throne, then the next honest claim's
    # compensation send fails and the unchecked branch is exposed
    return [
        _tx("0xBAD", "griefer", "claim_via", value=price_jump),
        _tx(2, "koth", "claim", value=price_jump + 10),
    ]


UNCHECKED_SEND = Scenario(
    name="unchecked_send",
    bundle_json={
        "contracts": [
            {"source": KOTH_SRC},
            {"source": GRIEFER_SRC},
            {"source": KWALLET_SRC},
        ],
        "boundary": ["koth"],
        "deploy": ["koth", "griefer", "kwallet"],
        "accounts": [
            {"address": "0x1", "balance": 100000},
            {"address": "0x2", "balance": 100000},
            {"address": "0x3", "balance": 100000},
            {"address": "0xBAD", "balance": 100000},
        ],
        "setup": [
            _tx(1, "griefer", "set", ["@koth"]),
            _tx(1, "kwallet", "set", ["@koth"]),
            _tx(1, "koth", "claim", value=1),
            _tx(2, "kwallet", "claim_via", value=5),
            _tx(3, "koth", "claim", value=8),
        ],
    },
    training=[
        _tx(1, "koth", "claim", value=12),
        _tx(2, "kwallet", "claim_via", value=15),
    ],
    normal_shapes=[_koth_claim, _koth_claim_via],
    attack=_koth_attack(4000),
    state_factory=_KothState,
)


# -- tx.origin phishing ------------------------------------------------------------


class _OwalletState:
    def __init__(self):
        self.balance = 497  # funded 500 in setup, paid out 3


def _owallet_pay(rng, st):
    amount = rng.randint(1, 5)
    if st.balance < amount:
        return None
    st.balance -= amount
    return _tx(1, "owallet", "pay", [rng.choice([2, 3]), amount])


def _owallet_fund(rng, st):
    value = rng.randint(5, 20)
    st.balance += value
    return _tx(1, "owallet", "fallback", value=value)


TX_ORIGIN = Scenario(
    name="tx_origin",
    bundle_json={
        "contracts": [{"source": OWALLET_SRC}, {"source": PHISHER_SRC}],
        "boundary": ["owallet"],
        "deploy": ["owallet", "phisher"],
        "accounts": [
            {"address": "0x1", "balance": 100000},
            {"address": "0x2", "balance": 1000},
            {"address": "0x3", "balance": 1000},
            {"address": "0xBAD", "balance": 1000},
        ],
        "setup": [
            _tx(1, "owallet", "init", [1]),
            _tx("0xBAD", "phisher", "set", ["@owallet"]),
            _tx(1, "owallet", "fallback", value=500),
            _tx(1, "owallet", "pay", [2, 3]),
        ],
    },
    training=[
        _tx(1, "owallet", "pay", [3, 2]),
        _tx(1, "owallet", "fallback", value=25),
    ],
    normal_shapes=[_owallet_pay, _owallet_fund],
    # the owner is tricked into sending value to the phisher, which calls
    # back into the wallet with the owner's origin intact
    attack=[_tx(1, "phisher", "fallback", value=1)],
    guard_reverts_tx=False,
    state_factory=_OwalletState,
)


# -- default visibility -------------------------------------------------------------


def _registry_read(rng, st):
    return _tx(rng.choice([1, 2, 3]), "registry", "read")


def _registry_governed(rng, st):
    return _tx(1, "registry", "governed", [1])


VISIBILITY = Scenario(
    name="visibility",
    bundle_json={
        "contracts": [{"source": REGISTRY_SRC}],
        "boundary": ["registry"],
        "deploy": ["registry"],
        "accounts": [
            {"address": "0x1", "balance": 1000},
            {"address": "0x2", "balance": 1000},
            {"address": "0x3", "balance": 1000},
            {"address": "0xBAD", "balance": 1000},
        ],
        "setup": [
            _tx(1, "registry", "init", [1]),
            _tx(1, "registry", "governed", [1]),
            _tx(2, "registry", "read"),
        ],
    },
    training=[
        _tx(1, "registry", "governed", [1]),
        _tx(3, "registry", "read"),
    ],
    normal_shapes=[_registry_read, _registry_governed],
    attack=[_tx("0xBAD", "registry", "promote", ["0xBAD"])],
)


# -- logic error (expected miss: coincidental correctness) ------------------------------


def _gate_intended_allow(rng, st):
    return _tx(rng.choice([1, 2, 3]), "gate", "grant", [rng.randint(6, 20), 1])


def _gate_intended_deny(rng, st):
    return _tx(rng.choice([1, 2, 3]), "gate", "grant", [rng.randint(0, 5), 0])


LOGIC_ERROR = Scenario(
    name="logic_error",
    bundle_json={
        "contracts": [{"source": GATE_SRC}],
        "boundary": ["gate"],
        "deploy": ["gate"],
        "accounts": [
            {"address": "0x1", "balance": 1000},
            {"address": "0x2", "balance": 1000},
            {"address": "0x3", "balance": 1000},
            {"address": "0xBAD", "balance": 1000},
        ],
        "setup": [
            _tx(1, "gate", "grant", [9, 1]),
            _tx(1, "gate", "grant", [2, 0]),
        ],
    },
    training=[
        _tx(2, "gate", "grant", [8, 1]),
        _tx(3, "gate", "grant", [1, 0]),
    ],
    normal_shapes=[_gate_intended_allow, _gate_intended_deny],
    # (level=9, flagged=0) should be denied but the OR bug grants it; the
    # grant path was covered in training, so no control-flow anomaly exists
    attack=[_tx("0xBAD", "gate", "grant", [9, 0])],
    detected=False,
)


DETECTION_SCENARIOS = [
    REENTRANCY,
    DELEGATECALL,
    OVERFLOW,
    UNCHECKED_SEND,
    TX_ORIGIN,
    VISIBILITY,
]

ALL_SCENARIOS = DETECTION_SCENARIOS + [LOGIC_ERROR]


def by_name(name: str) -> Scenario:
    for scenario in ALL_SCENARIOS:
        if scenario.name == name:
            return scenario
    raise KeyError(name)
