"""
Atomic crosschain transactions across sidechains, decided on the coordination chain.

Every leg applies its update to a provisional overlay, attests under its sidechain's keyset
version, and later reads the decision at a *final* block of the coordination chain. Legs that
read the same final prefix see the same decision, so outcomes are all-Committed or
all-Ignored. The `AtomicityHarness` replays many interleavings of these steps to check that.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from chaincoord import codec, contracts
from chaincoord.chain import Block, ChainNode, ContractCall, FinalityMode, ReceiptStatus, derive_account, genesis, mint_block
from chaincoord.contracts import XtxState
from chaincoord.errors import ContractError, DuplicateTxId, InvalidSpec, InvariantViolation, NoActiveKeyset, NotCanonical
from chaincoord.finality import FinalityPolicy, is_final
from chaincoord.gas import DEFAULT_GAS_SCHEDULE, GasSchedule
from chaincoord.sidechain import Sidechain, registration_calls

logger = logging.getLogger(__name__)


class Fault(str, Enum):
    NONE = "none"
    SILENT_LEG = "silent-leg"
    STALE_KEYSET = "stale-keyset"


@dataclass(frozen=True)
class CrosschainTxSpec:
    tx_id: bytes
    legs: Tuple[Tuple[bytes, Tuple[Tuple[str, Any], ...]], ...]
    timeout_blocks: int
    submit_time: int = 0
    fault: Fault = Fault.NONE
    faulty_leg: int = 0

    def __post_init__(self):
        sidechains = [sid for sid, _ in self.legs]
        if len(set(sidechains)) < 2 or len(set(sidechains)) != len(sidechains):
            raise InvalidSpec("a crosschain transaction needs at least two distinct sidechains")
        if self.timeout_blocks < 1:
            raise InvalidSpec("timeout_blocks must be at least 1")
        if not 0 <= self.faulty_leg < len(self.legs):
            raise InvalidSpec(f"faulty_leg {self.faulty_leg} is not a leg index")

    @property
    def sidechains(self) -> Tuple[bytes, ...]:
        return tuple(sid for sid, _ in self.legs)


@dataclass(frozen=True)
class Attestation:
    sidechain_id: bytes
    keyset_version: int
    value: bytes
    valid: bool = True


def keyset_public_key(sidechain_id: bytes, version: int) -> bytes:
    """Deterministic 48-byte stand-in for a sidechain's threshold public key"""
    seed = codec.encode((sidechain_id, version))
    return (codec.digest(seed) + codec.digest(seed + b"\x01"))[:contracts.PUBLIC_KEY_SIZE]


def keyset_calls(registry: bytes, sidechain_id: bytes, validators: Sequence[bytes], version: int = 1) -> List[tuple]:
    """Genesis calls proposing and voting in a keyset version"""
    calls = [(validators[0], registry, "keyset_propose", (sidechain_id, version, keyset_public_key(sidechain_id, version)))]
    calls.extend((v, registry, "keyset_vote", (sidechain_id, version)) for v in validators)
    return calls


@dataclass
class CoordinationWorld:
    """The coordination chain, its contracts and the sidechains that coordinate through it"""

    root: ChainNode
    registry: bytes
    coordination: bytes
    sidechains: Dict[bytes, Sidechain]
    policy: FinalityPolicy
    miner: bytes
    initiator: bytes
    block_time: int = 14
    clock: int = 0
    wait_for_finality: bool = True

    @property
    def instant(self) -> bool:
        return self.root.chain.mode is FinalityMode.INSTANT

    @property
    def depth(self) -> int:
        return 0 if self.instant else self.policy.confirmations_required

    def mint_root(self) -> Block:
        self.clock += self.block_time
        block = mint_block(self.root.chain, self.miner, self.root.mempool, timestamp=self.clock)
        self.root.add_block(block)
        return block

    def mint_sidechains(self):
        for sidechain in self.sidechains.values():
            if not sidechain.archived:
                sidechain.mint(self.clock)

    def step(self) -> Block:
        block = self.mint_root()
        self.mint_sidechains()
        return block

    def final_block(self) -> Optional[Block]:
        number = self.root.chain.height - self.depth
        if number < self.root.chain.base_number:
            return None
        return self.root.chain.canonical_block(number)

    def active_version(self, sidechain_id: bytes, at: Optional[bytes] = None) -> int:
        return self.root.chain.view(self.registry, "keyset_version", sidechain_id, at=at)

    def rotate_keyset(self, sidechain_id: bytes):
        """Propose the next keyset version and have every validator vote for it"""
        sidechain = self.sidechains[sidechain_id]
        version = self.active_version(sidechain_id) + 1
        propose = ContractCall(self.registry, "keyset_propose", (sidechain_id, version, keyset_public_key(sidechain_id, version)))
        self.root.submit(sidechain.validators[0], propose, self.root.required_gas(propose))
        for validator in sidechain.validators:
            vote = ContractCall(self.registry, "keyset_vote", (sidechain_id, version))
            self.root.submit(validator, vote, self.root.required_gas(vote))
        logger.debug(f"keyset rotation to v{version} submitted for {sidechain.name}")

    def inject_reorg(self, depth: int = 1, attacker: Optional[bytes] = None):
        """Replace the last `depth` root blocks by a heavier branch of empty blocks"""
        chain = self.root.chain
        parent = chain.canonical_block(max(chain.base_number, chain.height - depth))
        attacker = attacker or derive_account("reorg-injector")
        tip = parent.hash
        timestamp = parent.header.timestamp
        for _ in range(depth + 1):
            timestamp += 1
            block = mint_block(chain, attacker, (), timestamp=timestamp, parent=tip)
            tip = block.hash
            self.root.add_block(block)
        self.clock = max(self.clock, timestamp)


class CrosschainRun:
    """One crosschain transaction moving through start, attest, coordinate and resolve"""

    def __init__(self, spec: CrosschainTxSpec, world: CoordinationWorld):
        self.spec = spec
        self.world = world
        self.start_tx: Optional[bytes] = None
        self.submitted_at: Optional[int] = None
        self.attestations: Dict[int, Attestation] = {}
        self.silent: set = set()
        self.commit_tx: Optional[bytes] = None
        self.ignore_tx: Optional[bytes] = None
        self.verified: Tuple[Attestation, ...] = ()
        self.outcomes: Dict[int, XtxState] = {}
        self.failed: Optional[str] = None
        self.pre_commitments: Dict[bytes, bytes] = {}

    # start

    def submit_start(self, now: int) -> bytes:
        world = self.world
        for sid in self.spec.sidechains:
            if world.active_version(sid) < 1:
                raise NoActiveKeyset(f"sidechain {codec.short(sid)} has no active keyset")
        try:
            world.root.chain.view(world.coordination, "xtx_record", self.spec.tx_id)
        except ContractError:
            pass
        else:
            raise DuplicateTxId(codec.short(self.spec.tx_id))
        payload = ContractCall(world.coordination, "xtx_start", (self.spec.tx_id, self.spec.sidechains, self.spec.timeout_blocks))
        tx = world.root.submit(world.initiator, payload, world.root.required_gas(payload))
        self.start_tx = tx.hash
        self.submitted_at = now
        self.pre_commitments = {sid: world.sidechains[sid].commitment for sid in self.spec.sidechains}
        logger.info(f"crosschain {codec.short(self.spec.tx_id)}: start submitted at t={now}")
        return tx.hash

    def start_block(self) -> Optional[Block]:
        if self.start_tx is None:
            return None
        found = self.world.root.receipt(self.start_tx)
        if found is None:
            return None
        block, receipt = found
        if receipt.status is not ReceiptStatus.SUCCESS:
            self.failed = receipt.error
            return None
        return block

    def start_ready(self) -> bool:
        block = self.start_block()
        if block is None:
            return False
        if not self.world.wait_for_finality:
            return True
        return is_final(self.world.root.chain, block.hash, self.world.policy)

    # legs

    def leg_attest(self, index: int, now: int) -> Optional[Attestation]:
        if index in self.attestations or index in self.silent:
            return self.attestations.get(index)
        if not self.start_ready():
            return None
        sid, updates = self.spec.legs[index]
        sidechain = self.world.sidechains[sid]
        sidechain.provisional[self.spec.tx_id] = tuple(updates)
        faulty = index == self.spec.faulty_leg
        if faulty and self.spec.fault is Fault.SILENT_LEG:
            self.silent.add(index)
            logger.warning(f"crosschain {codec.short(self.spec.tx_id)}: leg {sidechain.name} stays silent")
            return None
        attestation = Attestation(sid, self.world.active_version(sid), codec.digest(codec.encode(tuple(updates))))
        self.attestations[index] = attestation
        if faulty and self.spec.fault is Fault.STALE_KEYSET:
            self.world.rotate_keyset(sid)
        logger.debug(f"crosschain {codec.short(self.spec.tx_id)}: leg {sidechain.name} attested v{attestation.keyset_version} at t={now}")
        return attestation

    # coordinator

    def verify(self) -> Tuple[Attestation, ...]:
        """Check every attestation against the keyset version active at the head"""
        self.verified = tuple(
            Attestation(a.sidechain_id, a.keyset_version, a.value, a.keyset_version == self.world.active_version(a.sidechain_id))
            for _, a in sorted(self.attestations.items())
        )
        return self.verified

    def _submit_decision(self, op: str, args: tuple) -> bytes:
        root = self.world.root
        payload = ContractCall(self.world.coordination, op, (self.spec.tx_id,) + args)
        return root.submit(self.world.initiator, payload, root.required_gas(payload)).hash

    def coordinate(self, now: int) -> Optional[XtxState]:
        """Submit commit when every leg attested validly, ignore when any attestation is invalid
        or the commit was rejected on chain. Missing attestations are left to the timeout."""
        if self.ignore_tx is not None:
            return XtxState.IGNORED
        if self.commit_tx is not None:
            found = self.world.root.receipt(self.commit_tx)
            if found is not None and found[1].status is not ReceiptStatus.SUCCESS:
                logger.warning(f"crosschain {codec.short(self.spec.tx_id)}: commit rejected ({found[1].error})")
                self.ignore_tx = self._submit_decision("xtx_ignore", ())
                return XtxState.IGNORED
            return XtxState.COMMITTED
        if not self.start_ready() or len(self.attestations) + len(self.silent) < len(self.spec.legs):
            return None
        if self.silent:
            return None
        verified = self.verify()
        if all(a.valid for a in verified):
            versions = tuple((a.sidechain_id, a.keyset_version) for a in verified)
            self.commit_tx = self._submit_decision("xtx_commit", (versions,))
            logger.info(f"crosschain {codec.short(self.spec.tx_id)}: commit submitted at t={now}")
            return XtxState.COMMITTED
        self.ignore_tx = self._submit_decision("xtx_ignore", ())
        logger.info(f"crosschain {codec.short(self.spec.tx_id)}: ignore submitted at t={now} (stale attestation)")
        return XtxState.IGNORED

    def resolve_leg(self, index: int, now: int) -> Optional[XtxState]:
        """Read the decision at the final block and apply or discard the leg's overlay"""
        if index in self.outcomes:
            return self.outcomes[index]
        final = self.world.final_block()
        if final is None:
            return None
        try:
            status = self.world.root.chain.view(self.world.coordination, "xtx_status", self.spec.tx_id, final.number, at=final.hash)
        except ContractError:
            return None
        if status is XtxState.STARTED:
            return None
        sid, _ = self.spec.legs[index]
        sidechain = self.world.sidechains[sid]
        updates = sidechain.provisional.pop(self.spec.tx_id, None)
        if status is XtxState.COMMITTED and updates:
            sidechain.set_values(updates)
        self.outcomes[index] = status
        logger.debug(f"crosschain {codec.short(self.spec.tx_id)}: leg {sidechain.name} resolved {status.value} at t={now}")
        return status

    def advance(self, now: int):
        """Take every step that is currently possible"""
        if self.start_tx is None:
            if now >= self.spec.submit_time:
                self.submit_start(now)
            return
        for index in range(len(self.spec.legs)):
            self.leg_attest(index, now)
        self.coordinate(now)
        for index in range(len(self.spec.legs)):
            self.resolve_leg(index, now)

    # results

    @property
    def done(self) -> bool:
        return self.failed is not None or len(self.outcomes) == len(self.spec.legs)

    @property
    def mixed(self) -> bool:
        return len(set(self.outcomes.values())) > 1

    @property
    def outcome(self) -> Optional[XtxState]:
        if not self.done or self.mixed or self.failed:
            return None
        return next(iter(self.outcomes.values()))


def run_crosschain(spec: CrosschainTxSpec, world: CoordinationWorld, max_blocks: int = 1000) -> XtxState:
    """Drive one crosschain transaction to a final decision on every leg"""
    run = CrosschainRun(spec, world)
    run.submit_start(world.clock)
    for _ in range(max_blocks):
        run.advance(world.clock)
        if run.done:
            break
        world.step()
    if run.failed:
        raise InvalidSpec(f"start transaction rejected: {run.failed}")
    if run.mixed:
        raise InvariantViolation(f"crosschain {codec.short(spec.tx_id)} resolved differently across legs")
    if not run.done:
        raise InvariantViolation(f"crosschain {codec.short(spec.tx_id)} undecided after {max_blocks} blocks")
    world.mint_sidechains()
    return run.outcome


def effective_start_delay(run: CrosschainRun, policy: FinalityPolicy) -> Optional[int]:
    """Seconds from start submission until its block has the required confirmations"""
    block = run.start_block()
    if block is None or run.submitted_at is None:
        return None
    chain = run.world.root.chain
    z = 0 if chain.mode is FinalityMode.INSTANT else policy.confirmations_required
    try:
        confirmed = chain.canonical_block(block.number + z)
    except NotCanonical:
        return None
    return confirmed.header.timestamp - run.submitted_at


def first_transaction_readiness(
    sidechain_id: bytes,
    root: ChainNode,
    registry: bytes,
    policy: FinalityPolicy,
) -> Optional[int]:
    """Seconds between the keyset activation block and that block becoming final; None while pending"""
    chain = root.chain
    try:
        record = chain.view(registry, "keyset_active", sidechain_id)
    except ContractError:
        return None
    activated = record.activated_at_block
    if chain.mode is FinalityMode.INSTANT:
        return 0
    try:
        activation = chain.canonical_block(activated)
        final = chain.canonical_block(activated + policy.confirmations_required)
    except NotCanonical:
        return None
    return final.header.timestamp - activation.header.timestamp


# ==================== ATOMICITY HARNESS ====================

@dataclass(frozen=True)
class Schedule:
    order: Tuple[int, ...]
    fault: Fault = Fault.NONE
    faulty_leg: int = 0
    reorg_after: Optional[int] = None
    wait_for_finality: bool = True


@dataclass
class ScheduleResult:
    schedule: Schedule
    outcomes: Dict[int, XtxState] = field(default_factory=dict)
    mixed: bool = False
    ignored_clean: bool = True
    versions_match: bool = True

    @property
    def outcome(self) -> Optional[XtxState]:
        values = set(self.outcomes.values())
        return values.pop() if len(values) == 1 else None


def enumerate_schedules(n_legs: int, wait_options: Sequence[bool] = (True, False)) -> Iterator[Schedule]:
    """Every attestation order x fault placement x reorg injection point"""
    faults = [(Fault.NONE, 0)]
    faults += [(Fault.SILENT_LEG, leg) for leg in range(n_legs)]
    faults += [(Fault.STALE_KEYSET, leg) for leg in range(n_legs)]
    reorg_points = [None] + list(range(n_legs + 2))
    for order in itertools.permutations(range(n_legs)):
        for fault, leg in faults:
            for reorg_after in reorg_points:
                for wait in wait_options:
                    yield Schedule(order, fault, leg, reorg_after, wait)


def random_schedule(rng: np.random.Generator, n_legs: int) -> Schedule:
    fault = [Fault.NONE, Fault.SILENT_LEG, Fault.STALE_KEYSET][int(rng.integers(3))]
    reorg = int(rng.integers(-1, n_legs + 2))
    return Schedule(
        order=tuple(int(i) for i in rng.permutation(n_legs)),
        fault=fault,
        faulty_leg=int(rng.integers(n_legs)),
        reorg_after=None if reorg < 0 else reorg,
        wait_for_finality=bool(rng.integers(2)),
    )


class AtomicityHarness:
    """Small coordination world for replaying crosschain schedules.

    Confirmations and timeouts are kept short so thousands of schedules stay cheap; the
    injected reorg is always one block deep, shallower than the confirmation depth.
    """

    def __init__(
        self,
        n_legs: int,
        confirmations: int = 2,
        validators_per_leg: int = 3,
        schedule: GasSchedule = DEFAULT_GAS_SCHEDULE,
    ):
        if n_legs < 2:
            raise InvalidSpec("a crosschain transaction needs at least two legs")
        self.n_legs = n_legs
        self.policy = FinalityPolicy(confirmations_required=confirmations, block_time_target=1.0)
        self.timeout_blocks = n_legs + 2 * confirmations + 4
        self.validators_per_leg = validators_per_leg
        self.gas_schedule = schedule

    def build_world(self, wait_for_finality: bool = True) -> Tuple[CoordinationWorld, CrosschainTxSpec]:
        initiator = derive_account("harness/initiator")
        miner = derive_account("harness/miner")
        pinning = derive_account("harness/pinning")
        registry = derive_account("harness/keysets")
        coordination = derive_account("harness/crosschain")

        sidechains = {}
        calls = []
        members = []
        for leg in range(self.n_legs):
            validators = [derive_account(f"harness/leg{leg}/v{i}") for i in range(self.validators_per_leg)]
            sidechain = Sidechain.create(f"harness-leg-{leg}", validators, schedule=self.gas_schedule)
            sidechains[sidechain.id] = sidechain
            members.append((sidechain.id, validators))
        calls.extend(registration_calls(pinning, members))
        for sid, validators in members:
            calls.extend(keyset_calls(registry, sid, validators))

        balances = {initiator: 10**24}
        balances.update({v: 10**24 for _, validators in members for v in validators})
        chain = genesis(
            balances,
            [(pinning, "pinning", ()), (registry, "keyset", (pinning,)), (coordination, "crosschain", (registry,))],
            schedule=self.gas_schedule,
            name="harness-root",
            calls=calls,
        )
        world = CoordinationWorld(
            root=ChainNode(chain, gas_price=1),
            registry=registry,
            coordination=coordination,
            sidechains=sidechains,
            policy=self.policy,
            miner=miner,
            initiator=initiator,
            block_time=1,
            wait_for_finality=wait_for_finality,
        )
        spec = CrosschainTxSpec(
            tx_id=codec.digest(b"harness-xtx"),
            legs=tuple((sid, ((f"leg{i}", i + 1),)) for i, sid in enumerate(sidechains)),
            timeout_blocks=self.timeout_blocks,
        )
        return world, spec

    def execute(self, schedule: Schedule) -> ScheduleResult:
        world, base_spec = self.build_world(schedule.wait_for_finality)
        spec = CrosschainTxSpec(base_spec.tx_id, base_spec.legs, base_spec.timeout_blocks, 0, schedule.fault, schedule.faulty_leg)
        run = CrosschainRun(spec, world)
        run.submit_start(world.clock)
        for _ in range(4 * self.policy.confirmations_required):
            if run.start_ready():
                break
            world.step()

        steps: List[Optional[int]] = list(schedule.order) + [None]
        for position, leg in enumerate(steps):
            if schedule.reorg_after == position:
                world.inject_reorg(1)
            if leg is None:
                run.coordinate(world.clock)
            else:
                run.leg_attest(leg, world.clock)
            world.step()
        if schedule.reorg_after == len(steps):
            world.inject_reorg(1)

        for _ in range(4 * (self.timeout_blocks + self.policy.confirmations_required)):
            run.advance(world.clock)
            if run.done:
                break
            world.step()
        world.mint_sidechains()
        if not run.done:
            raise InvariantViolation(f"schedule {schedule} left the transaction undecided")
        return self._judge(schedule, run, world)

    def _judge(self, schedule: Schedule, run: CrosschainRun, world: CoordinationWorld) -> ScheduleResult:
        result = ScheduleResult(schedule, dict(run.outcomes), run.mixed)
        if result.outcome is XtxState.IGNORED:
            result.ignored_clean = all(
                world.sidechains[sid].commitment == run.pre_commitments[sid] for sid in run.spec.sidechains
            )
        if result.outcome is XtxState.COMMITTED:
            found = world.root.receipt(run.commit_tx)
            # the commit ran against its parent state
            parent = found[0].header.parent_hash if found else None
            result.versions_match = parent is not None and all(
                a.keyset_version == world.active_version(a.sidechain_id, at=parent) for a in run.attestations.values()
            )
        return result

    def run_all(self, schedules: Sequence[Schedule]) -> List[ScheduleResult]:
        return [self.execute(schedule) for schedule in schedules]
