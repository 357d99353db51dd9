"""
Coordination contracts as deterministic state machines.

A contract lives at an address inside a chain's keyed store; every storage key is
prefixed with that address. Mutating operations run only through
`chain.apply_transaction`, which reverts the store when a `ContractError` escapes.
View operations are free and read whatever snapshot they are handed.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, FrozenSet, Optional, Tuple, Type

from chaincoord import codec
from chaincoord.errors import (
    AlreadyDecided,
    AlreadyVoted,
    BadReveal,
    BadVersion,
    ContractError,
    DomainTaken,
    DuplicateTxId,
    NotFound,
    NotOwner,
    NotParticipant,
    NotStarted,
    NothingProposed,
    StalePin,
    TimeoutExpired,
    UnknownContract,
    UnknownOperation,
    UnknownSidechain,
)

logger = logging.getLogger(__name__)

PUBLIC_KEY_SIZE = 48


class InvalidArgument(ContractError):
    pass


# ==================== RECORDS ====================

@codec.register
class ParticipantStatus(str, Enum):
    MASKED = "masked"
    UNMASKED = "unmasked"


@codec.register
class KeysetStatus(str, Enum):
    PROPOSED = "proposed"
    ACTIVE = "active"
    SUPERSEDED = "superseded"


@codec.register
class XtxState(str, Enum):
    STARTED = "started"
    COMMITTED = "committed"
    IGNORED = "ignored"


@codec.register
@dataclass(frozen=True)
class RegistryEntry:
    domain: str
    owner: bytes
    node_endpoints: Tuple[Tuple[str, int], ...]
    key_fingerprints: Tuple[bytes, ...]
    updated_at_block: int


@codec.register
@dataclass(frozen=True)
class PinRecord:
    sidechain_id: bytes
    block_number: int
    block_hash: bytes
    poster: bytes
    posted_at_block: int


@codec.register
@dataclass(frozen=True)
class ParticipantRecord:
    status: ParticipantStatus
    account: Optional[bytes] = None
    commitment: Optional[bytes] = None

    def __post_init__(self):
        if (self.status is ParticipantStatus.UNMASKED) != (self.account is not None):
            raise ValueError("unmasked participants carry an account, masked ones do not")
        if (self.status is ParticipantStatus.MASKED) != (self.commitment is not None):
            raise ValueError("masked participants carry a commitment, unmasked ones do not")


@codec.register
@dataclass(frozen=True)
class KeysetRecord:
    sidechain_id: bytes
    version: int
    public_key: bytes
    status: KeysetStatus
    votes: FrozenSet[bytes] = frozenset()
    activated_at_block: Optional[int] = None


@codec.register
@dataclass(frozen=True)
class CrosschainTxRecord:
    tx_id: bytes
    state: XtxState
    timeout_block: int
    sidechains: FrozenSet[bytes]
    initiator: bytes
    decided_at_block: Optional[int] = None


@dataclass(frozen=True)
class CallContext:
    caller: bytes
    block_number: int
    timestamp: int = 0


def participant_commitment(salt: bytes, account: bytes) -> bytes:
    return codec.digest(bytes(salt) + bytes(account))


# ==================== CONTRACT BASE ====================

class CoordinationContract:
    kind: str = ""
    operations: FrozenSet[str] = frozenset()
    views: FrozenSet[str] = frozenset()

    def __init__(self, address: bytes, links: Tuple[Any, ...] = ()):
        self.address = address
        self.links = links

    def key(self, *parts) -> tuple:
        return (self.address,) + parts

    def call(self, store, ctx: CallContext, op: str, args: tuple):
        if op not in self.operations:
            raise UnknownOperation(f"{self.kind} has no operation '{op}'")
        try:
            return getattr(self, op)(store, ctx, *args)
        except (TypeError, ValueError) as e:
            raise InvalidArgument(f"{op}: {e}") from e

    def view(self, store, op: str, *args):
        if op not in self.views:
            raise UnknownOperation(f"{self.kind} has no view '{op}'")
        return getattr(self, op)(store, *args)

    @staticmethod
    def storage_words(op: str, args: tuple) -> int:
        return 1


# ==================== REGISTRATION AUTHORITY ====================

def _check_domain(domain: str) -> str:
    labels = domain.split(".")
    if not domain or any(not label for label in labels):
        raise InvalidArgument(f"'{domain}' is not a dot-separated domain name")
    return domain.lower()


class RegistrationAuthority(CoordinationContract):
    """Maps domain names to node endpoints and key fingerprints for bootstrap discovery"""

    kind = "registry"
    operations = frozenset({"registry_register", "registry_update"})
    views = frozenset({"registry_lookup"})

    @staticmethod
    def storage_words(op: str, args: tuple) -> int:
        if len(args) == 3:
            return 1 + len(args[1]) + len(args[2])
        return 1

    def _entry(self, ctx, domain, endpoints, fingerprints) -> RegistryEntry:
        return RegistryEntry(
            domain=domain,
            owner=ctx.caller,
            node_endpoints=tuple((str(host), int(port)) for host, port in endpoints),
            key_fingerprints=tuple(bytes(fp) for fp in fingerprints),
            updated_at_block=ctx.block_number,
        )

    def registry_register(self, store, ctx, domain, endpoints=(), fingerprints=()):
        domain = _check_domain(domain)
        if store.get(self.key("domain", domain)) is not None:
            raise DomainTaken(domain)
        store.set(self.key("domain", domain), self._entry(ctx, domain, endpoints, fingerprints))

    def registry_update(self, store, ctx, domain, endpoints=(), fingerprints=()):
        domain = _check_domain(domain)
        current = store.get(self.key("domain", domain))
        if current is None:
            raise NotFound(domain)
        if current.owner != ctx.caller:
            raise NotOwner(domain)
        store.set(self.key("domain", domain), self._entry(ctx, domain, endpoints, fingerprints))

    def registry_lookup(self, store, domain) -> RegistryEntry:
        entry = store.get(self.key("domain", _check_domain(domain)))
        if entry is None:
            raise NotFound(domain)
        return entry


# ==================== STATE PINNING ====================

class PinningContract(CoordinationContract):
    """Sidechain membership (masked and unmasked) plus the per-sidechain pin history"""

    kind = "pinning"
    operations = frozenset({
        "sidechain_create",
        "participant_add",
        "participant_add_masked",
        "participant_unmask",
        "pin_add",
    })
    views = frozenset({"pin_latest", "pin_history", "participants", "is_participant", "unmasked_count", "sidechain_exists"})

    @staticmethod
    def storage_words(op: str, args: tuple) -> int:
        return 2 if op == "sidechain_create" else 1

    # membership

    def sidechain_exists(self, store, sidechain_id) -> bool:
        return store.get(self.key("sidechain", sidechain_id)) is not None

    def _require_sidechain(self, store, sidechain_id):
        if not self.sidechain_exists(store, sidechain_id):
            raise UnknownSidechain(codec.short(sidechain_id))

    def is_participant(self, store, sidechain_id, account) -> bool:
        record = store.get(self.key("member", sidechain_id, account))
        return record is not None and record.status is ParticipantStatus.UNMASKED

    def _require_participant(self, store, sidechain_id, account):
        self._require_sidechain(store, sidechain_id)
        if not self.is_participant(store, sidechain_id, account):
            raise NotParticipant(codec.short(account))

    def unmasked_count(self, store, sidechain_id) -> int:
        return store.get(self.key("unmasked_count", sidechain_id), 0)

    def _add_unmasked(self, store, sidechain_id, account):
        if self.is_participant(store, sidechain_id, account):
            return
        store.set(self.key("member", sidechain_id, account),
                  ParticipantRecord(ParticipantStatus.UNMASKED, account=account))
        store.set(self.key("unmasked_count", sidechain_id), self.unmasked_count(store, sidechain_id) + 1)

    def sidechain_create(self, store, ctx, sidechain_id):
        sidechain_id = bytes(sidechain_id)
        if self.sidechain_exists(store, sidechain_id):
            raise DomainTaken(codec.short(sidechain_id))
        store.set(self.key("sidechain", sidechain_id), ctx.caller)
        self._add_unmasked(store, sidechain_id, ctx.caller)

    def participant_add(self, store, ctx, sidechain_id, account):
        self._require_participant(store, sidechain_id, ctx.caller)
        self._add_unmasked(store, sidechain_id, bytes(account))

    def participant_add_masked(self, store, ctx, sidechain_id, commitment):
        self._require_participant(store, sidechain_id, ctx.caller)
        commitment = bytes(commitment)
        if len(commitment) != codec.DIGEST_SIZE:
            raise InvalidArgument("commitment must be a 32-byte digest")
        store.set(self.key("masked", sidechain_id, commitment),
                  ParticipantRecord(ParticipantStatus.MASKED, commitment=commitment))

    def participant_unmask(self, store, ctx, sidechain_id, salt, account):
        self._require_sidechain(store, sidechain_id)
        commitment = participant_commitment(salt, account)
        record = store.get(self.key("masked", sidechain_id, commitment))
        if record is None:
            raise BadReveal(codec.short(commitment))
        store.delete(self.key("masked", sidechain_id, commitment))
        self._add_unmasked(store, sidechain_id, bytes(account))

    def participants(self, store, sidechain_id) -> Tuple[ParticipantRecord, ...]:
        self._require_sidechain(store, sidechain_id)
        found = [value for key, value in store.scan(self.key("member", sidechain_id))]
        found += [value for key, value in store.scan(self.key("masked", sidechain_id))]
        return tuple(found)

    # pins

    def pin_add(self, store, ctx, sidechain_id, block_number, block_hash):
        self._require_participant(store, sidechain_id, ctx.caller)
        count = store.get(self.key("pin_count", sidechain_id), 0)
        if count:
            latest = store.get(self.key("pin", sidechain_id, count - 1))
            if block_number <= latest.block_number or ctx.block_number <= latest.posted_at_block:
                raise StalePin(f"block {block_number} is not after pinned block {latest.block_number}")
        if len(block_hash) != codec.DIGEST_SIZE:
            raise InvalidArgument("block hash must be a 32-byte digest")
        record = PinRecord(
            sidechain_id=bytes(sidechain_id),
            block_number=int(block_number),
            block_hash=bytes(block_hash),
            poster=ctx.caller,
            posted_at_block=ctx.block_number,
        )
        store.set(self.key("pin", sidechain_id, count), record)
        store.set(self.key("pin_count", sidechain_id), count + 1)

    def pin_latest(self, store, sidechain_id) -> PinRecord:
        self._require_sidechain(store, sidechain_id)
        count = store.get(self.key("pin_count", sidechain_id), 0)
        if not count:
            raise NotFound(f"no pins for {codec.short(sidechain_id)}")
        return store.get(self.key("pin", sidechain_id, count - 1))

    def pin_history(self, store, sidechain_id) -> Tuple[PinRecord, ...]:
        self._require_sidechain(store, sidechain_id)
        count = store.get(self.key("pin_count", sidechain_id), 0)
        return tuple(store.get(self.key("pin", sidechain_id, i)) for i in range(count))


# ==================== SIDECHAIN KEYS ====================

def majority_reached(votes: int, unmasked: int) -> bool:
    """Strict majority of unmasked participants"""
    return 2 * votes > unmasked


class KeysetRegistry(CoordinationContract):
    """Versioned sidechain public keys, activated by participant vote.

    Membership is read from the linked pinning contract so it changes in one place.
    """

    kind = "keyset"
    operations = frozenset({"keyset_propose", "keyset_vote"})
    views = frozenset({"keyset_active", "keyset_pending", "keyset_version", "keyset_history"})

    @property
    def membership(self) -> PinningContract:
        return PinningContract(self.links[0])

    def keyset_version(self, store, sidechain_id) -> int:
        return store.get(self.key("active_version", sidechain_id), 0)

    def keyset_propose(self, store, ctx, sidechain_id, version, public_key):
        self.membership._require_participant(store, sidechain_id, ctx.caller)
        if version != self.keyset_version(store, sidechain_id) + 1:
            raise BadVersion(f"expected version {self.keyset_version(store, sidechain_id) + 1}, got {version}")
        if len(public_key) != PUBLIC_KEY_SIZE:
            raise InvalidArgument(f"public key must be {PUBLIC_KEY_SIZE} bytes")
        # a fresh proposal for the same version replaces an unfinished one
        store.set(self.key("keyset", sidechain_id, version),
                  KeysetRecord(bytes(sidechain_id), int(version), bytes(public_key), KeysetStatus.PROPOSED))
        store.set(self.key("pending", sidechain_id), version)

    def keyset_vote(self, store, ctx, sidechain_id, version):
        pending = store.get(self.key("pending", sidechain_id))
        if pending is None:
            raise NothingProposed(codec.short(sidechain_id))
        if version != pending:
            raise BadVersion(f"version {version} is not the pending proposal {pending}")
        membership = self.membership
        membership._require_participant(store, sidechain_id, ctx.caller)
        record = store.get(self.key("keyset", sidechain_id, version))
        if ctx.caller in record.votes:
            raise AlreadyVoted(codec.short(ctx.caller))
        record = replace(record, votes=record.votes | {ctx.caller})
        if majority_reached(len(record.votes), membership.unmasked_count(store, sidechain_id)):
            previous = self.keyset_version(store, sidechain_id)
            if previous:
                old = store.get(self.key("keyset", sidechain_id, previous))
                store.set(self.key("keyset", sidechain_id, previous), replace(old, status=KeysetStatus.SUPERSEDED))
            record = replace(record, status=KeysetStatus.ACTIVE, activated_at_block=ctx.block_number)
            store.set(self.key("active_version", sidechain_id), version)
            store.delete(self.key("pending", sidechain_id))
            logger.debug(f"Keyset v{version} active for {codec.short(sidechain_id)} at block {ctx.block_number}")
        store.set(self.key("keyset", sidechain_id, version), record)

    def keyset_active(self, store, sidechain_id) -> KeysetRecord:
        version = self.keyset_version(store, sidechain_id)
        if not version:
            raise NothingProposed(f"no active keyset for {codec.short(sidechain_id)}")
        return store.get(self.key("keyset", sidechain_id, version))

    def keyset_pending(self, store, sidechain_id) -> Optional[KeysetRecord]:
        pending = store.get(self.key("pending", sidechain_id))
        return None if pending is None else store.get(self.key("keyset", sidechain_id, pending))

    def keyset_history(self, store, sidechain_id) -> Tuple[KeysetRecord, ...]:
        return tuple(value for key, value in sorted(store.scan(self.key("keyset", sidechain_id)), key=lambda kv: kv[1].version))


# ==================== CROSSCHAIN COORDINATION ====================

class CrosschainCoordination(CoordinationContract):
    """Started / Committed / Ignored record per crosschain transaction, with a block-number timeout.

    When linked to a keyset registry, a commit must carry, for every sidechain, the keyset
    version its attestation was signed under, and each must be the active version.
    """

    kind = "crosschain"
    operations = frozenset({"xtx_start", "xtx_commit", "xtx_ignore"})
    views = frozenset({"xtx_status", "xtx_record"})

    @staticmethod
    def storage_words(op: str, args: tuple) -> int:
        if op == "xtx_start" and len(args) >= 2:
            return 2 + len(args[1])
        return 1

    def xtx_start(self, store, ctx, tx_id, sidechains, timeout_blocks):
        if store.get(self.key("xtx", tx_id)) is not None:
            raise DuplicateTxId(codec.short(tx_id))
        if int(timeout_blocks) < 1:
            raise InvalidArgument("timeout_blocks must be at least 1")
        store.set(self.key("xtx", tx_id), CrosschainTxRecord(
            tx_id=bytes(tx_id),
            state=XtxState.STARTED,
            timeout_block=ctx.block_number + int(timeout_blocks),
            sidechains=frozenset(bytes(s) for s in sidechains),
            initiator=ctx.caller,
        ))

    def _decide(self, store, ctx, tx_id, outcome: XtxState, attested=()):
        record = store.get(self.key("xtx", tx_id))
        if record is None:
            raise NotStarted(codec.short(tx_id))
        if record.state is not XtxState.STARTED:
            raise AlreadyDecided(f"{codec.short(tx_id)} is {record.state.value}")
        if record.initiator != ctx.caller:
            raise NotOwner(codec.short(ctx.caller))
        if outcome is XtxState.COMMITTED and ctx.block_number > record.timeout_block:
            raise TimeoutExpired(f"block {ctx.block_number} is past timeout {record.timeout_block}")
        if outcome is XtxState.COMMITTED and self.links:
            self._check_attestations(store, record, dict(attested))
        store.set(self.key("xtx", tx_id), replace(record, state=outcome, decided_at_block=ctx.block_number))

    def _check_attestations(self, store, record: CrosschainTxRecord, versions: Dict[bytes, int]):
        if set(versions) != set(record.sidechains):
            raise InvalidArgument("a commit needs one attestation per sidechain")
        registry = KeysetRegistry(self.links[0])
        for sid, version in versions.items():
            active = registry.keyset_version(store, sid)
            if version != active:
                raise BadVersion(f"attestation for {codec.short(sid)} uses keyset v{version}, active is v{active}")

    def xtx_commit(self, store, ctx, tx_id, attested=()):
        self._decide(store, ctx, tx_id, XtxState.COMMITTED, attested)

    def xtx_ignore(self, store, ctx, tx_id):
        self._decide(store, ctx, tx_id, XtxState.IGNORED)

    def xtx_record(self, store, tx_id) -> CrosschainTxRecord:
        record = store.get(self.key("xtx", tx_id))
        if record is None:
            raise NotStarted(codec.short(tx_id))
        return record

    def xtx_status(self, store, tx_id, at_block: int) -> XtxState:
        # expiry is judged at read time against at_block
        record = self.xtx_record(store, tx_id)
        if record.state is XtxState.STARTED and at_block > record.timeout_block:
            return XtxState.IGNORED
        return record.state


# ==================== SIDECHAIN APPLICATION LEDGER ====================

class Ledger(CoordinationContract):
    """Key/value application state of a sidechain"""

    kind = "ledger"
    operations = frozenset({"ledger_set"})
    views = frozenset({"ledger_get", "ledger_items"})

    @staticmethod
    def storage_words(op: str, args: tuple) -> int:
        return max(1, len(args[0])) if args else 1

    def ledger_set(self, store, ctx, updates):
        for name, value in updates:
            store.set(self.key("kv", str(name)), value)

    def ledger_get(self, store, name, default=None):
        return store.get(self.key("kv", str(name)), default)

    def ledger_items(self, store) -> Dict[str, Any]:
        return {key[-1]: value for key, value in store.scan(self.key("kv"))}


# ==================== DISPATCH ====================

CONTRACT_TYPES: Dict[str, Type[CoordinationContract]] = {
    cls.kind: cls for cls in (RegistrationAuthority, PinningContract, KeysetRegistry, CrosschainCoordination, Ledger)
}


def deploy(store, address: bytes, kind: str, links: Tuple[Any, ...] = ()) -> CoordinationContract:
    if kind not in CONTRACT_TYPES:
        raise UnknownContract(f"unknown contract kind '{kind}'")
    if store.get((address, "code")) is not None:
        raise InvalidArgument(f"address {codec.short(address)} already holds a contract")
    store.set((address, "code"), (kind, tuple(links)))
    return CONTRACT_TYPES[kind](address, tuple(links))


def load_contract(store, address: bytes) -> CoordinationContract:
    code = store.get((address, "code"))
    if code is None:
        raise UnknownContract(f"no contract at {codec.short(address)}")
    kind, links = code
    return CONTRACT_TYPES[kind](address, links)


def storage_words(store, address: bytes, op: str, args: tuple) -> int:
    code = store.get((address, "code"))
    if code is None:
        return 1
    return CONTRACT_TYPES[code[0]].storage_words(op, args)


def execute_call(store, address: bytes, ctx: CallContext, op: str, args: tuple):
    return load_contract(store, address).call(store, ctx, op, tuple(args))


def view(store, address: bytes, op: str, *args):
    """Free read-only call against a state snapshot"""
    return load_contract(store, address).view(store, op, *args)
