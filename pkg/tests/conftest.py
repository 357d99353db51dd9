from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import pytest

from chaincoord.chain import ChainNode, ChainView, derive_account, genesis, mint_block
from chaincoord.finality import FinalityPolicy
from chaincoord.sidechain import PinLevel, PinTarget, Sidechain, registration_calls, sidechain_id

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
FUNDING = 10**24


@pytest.fixture
def alice() -> bytes:
    return derive_account("alice")


@pytest.fixture
def bob() -> bytes:
    return derive_account("bob")


@pytest.fixture
def miner() -> bytes:
    return derive_account("miner")


@pytest.fixture
def funded_chain(alice, bob) -> ChainView:
    return genesis({alice: FUNDING, bob: FUNDING}, name="test")


@pytest.fixture
def scenario_path():
    def _path(name: str) -> Path:
        return SCENARIOS / f"{name}.scenario"
    return _path


@dataclass
class PinWorld:
    """A probabilistic root chain with a pinning contract and one registered sidechain"""

    root: ChainNode
    pinning: bytes
    sidechain: Sidechain
    policy: FinalityPolicy
    miner: bytes
    clock: int = 0

    def mint_root(self, blocks: int = 1):
        for _ in range(blocks):
            self.clock += 1
            block = mint_block(self.root.chain, self.miner, self.root.mempool, timestamp=self.clock)
            self.root.add_block(block)

    @property
    def stack(self) -> Tuple[PinLevel, ...]:
        return (PinLevel(self.root.chain, self.pinning, self.policy),)


def validators_for(label: str, count: int = 3) -> Tuple[bytes, ...]:
    return tuple(derive_account(f"{label}/v{i}") for i in range(count))


@pytest.fixture
def pin_world(miner) -> PinWorld:
    validators = validators_for("alpha")
    pinning = derive_account("root/pinning")
    root = genesis(
        {v: FUNDING for v in validators},
        [(pinning, "pinning", ())],
        name="root",
        calls=registration_calls(pinning, [(sidechain_id("alpha"), validators)]),
    )
    node = ChainNode(root, gas_price=1)
    sidechain = Sidechain.create("alpha", validators)
    sidechain.attach_pin_target(PinTarget(node, pinning))
    return PinWorld(node, pinning, sidechain, FinalityPolicy(confirmations_required=2, block_time_target=1.0), miner)
