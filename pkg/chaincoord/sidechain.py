"""
Instant-finality sidechains, their pinning clients and the archive/restore lifecycle.

The same `Sidechain` type serves as an intermediate private chain in hierarchical pinning:
such a chain hosts its own pinning contract, and its own head is pinned onward to the root.
"""

import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from chaincoord import codec, contracts
from chaincoord.chain import (
    Block,
    BlockHeader,
    ChainView,
    ContractCall,
    FinalityMode,
    ChainNode,
    Payload,
    ReceiptStatus,
    Transaction,
    WorldState,
    genesis,
    mint_block,
)
from chaincoord.errors import (
    ContractError,
    CorruptBlob,
    FinalPinNotFinal,
    NoPinFound,
    NoPinTarget,
    NotCanonical,
    PinMismatch,
    SidechainArchived,
    UnknownPin,
)
from chaincoord.finality import FinalityPolicy, is_final
from chaincoord.gas import DEFAULT_GAS_SCHEDULE, GasSchedule

logger = logging.getLogger(__name__)

BLOB_MAGIC = b"EPSA1"
VALIDATOR_FUNDING = 10**24

META_ID = ("meta", "sidechain_id")
META_VALIDATORS = ("meta", "validators")
META_LEDGER = ("meta", "ledger")
META_PINNING = ("meta", "pinning")


def sidechain_id(label: str) -> bytes:
    return codec.digest(b"sidechain:" + label.encode("utf-8"))


def _address(sid: bytes, role: str) -> bytes:
    return codec.digest(sid + role.encode("utf-8"))[-20:]


class PinStatus(str, Enum):
    FINAL = "final"
    PENDING = "pending"


@dataclass(frozen=True)
class PinTarget:
    """Where a chain posts its pins: the hosting node and its pinning contract"""

    node: ChainNode
    contract: bytes

    @property
    def chain(self) -> ChainView:
        return self.node.chain


@dataclass(frozen=True)
class PinLevel:
    """One level of a pin stack: the chain hosting a pinning contract and how to judge finality there.

    `pinned_as` is the id under which this level's chain is itself pinned on the next level.
    """

    chain: ChainView
    contract: bytes
    policy: FinalityPolicy = field(default_factory=FinalityPolicy)
    pinned_as: Optional[bytes] = None

    @property
    def mode(self) -> FinalityMode:
        return self.chain.mode


@dataclass
class PinSubmission:
    number: int
    block_hash: bytes
    poster: bytes
    tx_hash: bytes
    submitted_at: int
    included_at: Optional[int] = None
    final_at: Optional[int] = None
    resubmissions: int = 0
    reverted: bool = False

    @property
    def latency(self) -> Optional[int]:
        return None if self.included_at is None else self.included_at - self.submitted_at

    @property
    def finality_delay(self) -> Optional[int]:
        return None if self.final_at is None else self.final_at - self.submitted_at


class PinningClient:
    """Posts a chain's head to a pin target, rotating the poster across participants.

    Posters use the target node's shared wallets, so a pin dropped by a reorg on the target
    is re-signed with a fresh nonce and followed here until it is included again.
    """

    def __init__(self, source: "Sidechain", target: PinTarget, posters: Sequence[bytes]):
        if not posters:
            raise NoPinTarget(f"{source.name} has no participant able to post pins")
        self.source = source
        self.target = target
        self.posters = tuple(posters)
        self.submissions: List[PinSubmission] = []

    @property
    def last_pinned_number(self) -> int:
        return self.submissions[-1].number if self.submissions else -1

    def has_new_head(self) -> bool:
        return self.source.chain.height > self.last_pinned_number

    def pin_now(self, at_time: int) -> Transaction:
        head = self.source.chain.head_block
        poster = self.posters[len(self.submissions) % len(self.posters)]
        payload = ContractCall(self.target.contract, "pin_add", (self.source.id, head.number, head.hash))
        tx = self.target.node.submit(poster, payload, self.target.chain.schedule.pin_tx_gas)
        self.submissions.append(PinSubmission(head.number, head.hash, poster, tx.hash, at_time))
        logger.debug(f"{self.source.name}: pin of block {head.number} submitted at t={at_time}")
        return tx

    def observe(self):
        """Follow re-signed pins and record inclusion times on the target's canonical chain"""
        for submission in self.submissions:
            if submission.reverted:
                continue
            current = self.target.node.resolve(submission.tx_hash)
            if current != submission.tx_hash:
                submission.tx_hash = current
                submission.resubmissions += 1
            found = self.target.node.receipt(current)
            if found is None:
                submission.included_at = None
                continue
            block, receipt = found
            if submission.included_at is None:
                submission.included_at = max(block.header.timestamp, submission.submitted_at)
            if receipt.status is not ReceiptStatus.SUCCESS:
                submission.reverted = True
                logger.warning(f"{self.source.name}: pin of block {submission.number} reverted ({receipt.error})")


class Sidechain:
    """An instant-finality chain run by a fixed validator set"""

    def __init__(self, chain: ChainView, name: str = ""):
        state = chain.state_at()
        self.id: bytes = state.get(META_ID)
        self.validators: Tuple[bytes, ...] = state.get(META_VALIDATORS)
        self.ledger: bytes = state.get(META_LEDGER)
        self.pinning: Optional[bytes] = state.get(META_PINNING)
        self.node = ChainNode(chain)
        self.name = name or chain.name
        self.pin_client: Optional[PinningClient] = None
        self.archived = False
        # tx_id -> provisional ledger updates awaiting a crosschain decision
        self.provisional: Dict[bytes, Tuple[Tuple[str, Any], ...]] = {}

    @classmethod
    def create(
        cls,
        label: str,
        validators: Sequence[bytes],
        timestamp: int = 0,
        host_pinning: bool = False,
        schedule: GasSchedule = DEFAULT_GAS_SCHEDULE,
        retained_states: int = 512,
        members: Iterable[Tuple[bytes, Sequence[bytes]]] = (),
    ) -> "Sidechain":
        """Build a sidechain genesis. An intermediate chain sets `host_pinning` and lists the
        (sidechain id, participants) pairs pre-registered on its pinning contract."""
        sid = sidechain_id(label)
        validators = tuple(validators)
        ledger = _address(sid, "ledger")
        deployments = [(ledger, "ledger", ())]
        extra: Dict[Any, Any] = {META_ID: sid, META_VALIDATORS: validators, META_LEDGER: ledger}
        calls = []
        if host_pinning:
            pinning = _address(sid, "pinning")
            deployments.append((pinning, "pinning", ()))
            extra[META_PINNING] = pinning
            calls = registration_calls(pinning, members)
        chain = genesis(
            {v: VALIDATOR_FUNDING for v in validators},
            deployments,
            extra=extra,
            mode=FinalityMode.INSTANT,
            schedule=schedule,
            timestamp=timestamp,
            retained_states=retained_states,
            name=label,
            calls=calls,
        )
        return cls(chain, label)

    @property
    def chain(self) -> ChainView:
        return self.node.chain

    @property
    def mempool(self):
        return self.node.mempool

    def attach_pin_target(self, target: PinTarget, posters: Optional[Sequence[bytes]] = None) -> PinningClient:
        self.pin_client = PinningClient(self, target, posters or self.validators)
        return self.pin_client

    def pin_target(self) -> PinTarget:
        """Pin target for chains pinning onto this one (intermediate chains only)"""
        if self.pinning is None:
            raise NoPinTarget(f"{self.name} hosts no pinning contract")
        return PinTarget(self.node, self.pinning)

    # transactions

    def submit(self, payload: Payload, sender: Optional[bytes] = None) -> Transaction:
        if self.archived:
            raise SidechainArchived(f"{self.name} is archived")
        sender = sender or self.validators[0]
        return self.node.submit(sender, payload, self.node.required_gas(payload), 0)

    def set_values(self, updates: Iterable[Tuple[str, Any]], sender: Optional[bytes] = None) -> Transaction:
        return self.submit(ContractCall(self.ledger, "ledger_set", (tuple(updates),)), sender)

    def mint(self, timestamp: int, allow_empty: bool = False) -> Optional[Block]:
        """Append a block if transactions are pending, or unconditionally with `allow_empty`.
        Instant finality: it is final at once."""
        if self.archived:
            raise SidechainArchived(f"{self.name} is archived")
        if not allow_empty and not len(self.mempool):
            return None
        proposer = self.validators[(self.chain.height + 1) % len(self.validators)]
        block = mint_block(self.chain, proposer, self.mempool, timestamp=timestamp)
        self.node.add_block(block)
        logger.debug(f"{self.name}: block {block.number} with {len(block.transactions)} txs")
        return block

    def ledger_items(self) -> Dict[str, Any]:
        return self.chain.view(self.ledger, "ledger_items")

    @property
    def commitment(self) -> bytes:
        return self.chain.head_block.header.state_commitment


def registration_calls(pinning: bytes, members: Iterable[Tuple[bytes, Sequence[bytes]]]) -> List[tuple]:
    """Genesis calls registering each sidechain with its participants on a pinning contract"""
    calls = []
    for sid, participants in members:
        participants = tuple(participants)
        calls.append((participants[0], pinning, "sidechain_create", (sid,)))
        calls.extend((participants[0], pinning, "participant_add", (sid, account)) for account in participants[1:])
    return calls


def pin_now(sidechain: Sidechain, at_time: int) -> Transaction:
    if sidechain.pin_client is None:
        raise NoPinTarget(f"{sidechain.name} has no pin target")
    return sidechain.pin_client.pin_now(at_time)


# ==================== PIN FINALITY ====================

def _pin_history(level: PinLevel, pinned_id: bytes) -> Tuple[contracts.PinRecord, ...]:
    try:
        return level.chain.view(level.contract, "pin_history", pinned_id)
    except ContractError:
        return ()


def pin_finality(pin: contracts.PinRecord, stack: Sequence[PinLevel]) -> PinStatus:
    """A pin is final when its block is final on its chain and, recursively, some pin of that
    chain covering the block is final on the next level down the stack."""
    if not stack:
        raise UnknownPin("empty pin stack")
    level = stack[0]
    if pin not in _pin_history(level, pin.sidechain_id):
        raise UnknownPin(f"pin of block {pin.block_number} is not on the canonical {level.chain.name}")
    try:
        container = level.chain.canonical_block(pin.posted_at_block)
        final = is_final(level.chain, container.hash, level.policy, level.mode)
    except NotCanonical:
        return PinStatus.PENDING
    if not final:
        return PinStatus.PENDING
    if len(stack) == 1:
        return PinStatus.FINAL

    below = stack[1]
    for cover in _pin_history(below, level.pinned_as):
        if cover.block_number < pin.posted_at_block:
            continue
        try:
            if level.chain.canonical_block(cover.block_number).hash != cover.block_hash:
                continue
        except NotCanonical:
            continue
        return pin_finality(cover, stack[1:])
    return PinStatus.PENDING


def pin_final_time(pin: contracts.PinRecord, stack: Sequence[PinLevel]) -> Optional[int]:
    """Timestamp at which `pin` became final down the stack, read off the current canonical chains"""
    level = stack[0]
    try:
        container = level.chain.canonical_block(pin.posted_at_block)
        if level.mode is FinalityMode.INSTANT:
            final_at = container.header.timestamp
        else:
            depth = level.policy.confirmations_required
            final_at = level.chain.canonical_block(container.number + depth).header.timestamp
    except NotCanonical:
        return None
    if len(stack) == 1:
        return final_at

    for cover in _pin_history(stack[1], level.pinned_as):
        if cover.block_number < pin.posted_at_block:
            continue
        try:
            if level.chain.canonical_block(cover.block_number).hash != cover.block_hash:
                continue
        except NotCanonical:
            continue
        below = pin_final_time(cover, stack[1:])
        return None if below is None else max(final_at, below)
    return None


def final_pin(sidechain: Sidechain, stack: Sequence[PinLevel]) -> Optional[contracts.PinRecord]:
    """The pin of the sidechain's current head on the first stack level, if posted"""
    head = sidechain.chain.head_block
    for record in _pin_history(stack[0], sidechain.id):
        if record.block_number == head.number and record.block_hash == head.hash:
            return record
    return None


# ==================== ARCHIVE / RESTORE ====================

@dataclass(frozen=True)
class ArchiveBlob:
    header_bytes: bytes
    state_bytes: bytes
    final_hash: bytes

    def to_bytes(self) -> bytes:
        return encode_blob(self)


def encode_blob(blob: ArchiveBlob) -> bytes:
    parts = [BLOB_MAGIC]
    for section in (blob.header_bytes, blob.state_bytes, blob.final_hash):
        parts.append(struct.pack(">I", len(section)))
        parts.append(section)
    return b"".join(parts)


def decode_blob(data: bytes) -> ArchiveBlob:
    data = bytes(data)
    if not data.startswith(BLOB_MAGIC):
        raise CorruptBlob("bad magic")
    pos = len(BLOB_MAGIC)
    sections = []
    for _ in range(3):
        if pos + 4 > len(data):
            raise CorruptBlob("truncated length prefix")
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        pos += 4
        if pos + length > len(data):
            raise CorruptBlob("truncated section")
        sections.append(data[pos:pos + length])
        pos += length
    if pos != len(data):
        raise CorruptBlob("trailing bytes after final hash")
    return ArchiveBlob(*sections)


def archive(sidechain: Sidechain, stack: Sequence[PinLevel]) -> ArchiveBlob:
    """Seal the sidechain once a pin of its head is final down the whole stack"""
    record = final_pin(sidechain, stack)
    if record is None or pin_finality(record, stack) is not PinStatus.FINAL:
        raise FinalPinNotFinal(f"{sidechain.name}: head block {sidechain.chain.height} has no final pin")
    head = sidechain.chain.head_block
    state = sidechain.chain.state_at()
    blob = ArchiveBlob(
        header_bytes=head.header.serialize(),
        state_bytes=codec.encode(state.items()),
        final_hash=head.hash,
    )
    sidechain.archived = True
    logger.info(f"{sidechain.name}: archived at block {head.number} ({codec.short(head.hash)})")
    return blob


def restore(
    blob: ArchiveBlob,
    stack: Sequence[PinLevel],
    schedule: GasSchedule = DEFAULT_GAS_SCHEDULE,
) -> Sidechain:
    """Rebuild a sidechain from its archive after checking it against a final pin of its
    head on the first level of `stack`"""
    if not isinstance(blob, ArchiveBlob):
        blob = decode_blob(blob)
    try:
        header = BlockHeader.deserialize(blob.header_bytes)
        pairs = codec.decode_canonical(blob.state_bytes)
        if not isinstance(pairs, tuple):
            raise CorruptBlob("state section is not a sequence of entries")
        entries = dict(pairs)
        if codec.pairs(entries) != pairs:
            raise CorruptBlob("state entries are not in canonical order")
    except (ValueError, TypeError) as e:
        raise CorruptBlob(str(e)) from e
    if codec.digest(blob.header_bytes) != blob.final_hash:
        raise CorruptBlob("final hash does not match the header")
    state = WorldState(entries)
    if state.commitment != header.state_commitment:
        raise CorruptBlob("state does not match the header commitment")
    sid = entries.get(META_ID)
    if not isinstance(sid, bytes):
        raise CorruptBlob("archive carries no sidechain id")

    level = stack[0]
    pinned = [record for record in _pin_history(level, sid) if record.block_number == header.number]
    if not pinned:
        raise NoPinFound(f"{level.chain.name} holds no pin of block {header.number} for {codec.short(sid)}")
    matching = [record for record in pinned if record.block_hash == blob.final_hash]
    if not matching:
        raise PinMismatch(f"archived block {header.number} differs from the pinned hash")
    if all(pin_finality(record, stack) is not PinStatus.FINAL for record in matching):
        raise NoPinFound(f"the pin of block {header.number} for {codec.short(sid)} is not final yet")

    chain = ChainView(Block(header), state, FinalityMode.INSTANT, schedule, name=f"restored-{codec.short(sid)}")
    sidechain = Sidechain(chain)
    logger.info(f"{sidechain.name}: restored at block {header.number}")
    return sidechain
