"""
Deterministic discrete-event simulation of a coordination chain, its sidechains, intermediate
chains, adversaries and crosschain workload.

Simulated time advances in whole seconds. Every random draw comes from one numpy Generator
seeded from the run seed, so a (config, seed) pair always yields the same report.
"""

import heapq
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from chaincoord import codec
from chaincoord.chain import (
    Block,
    ChainNode,
    ContractCall,
    ValueTransfer,
    WorldState,
    confirmations,
    derive_account,
    genesis,
    mint_block,
)
from chaincoord.config import get_settings
from chaincoord.contracts import XtxState
from chaincoord.crosschain import CoordinationWorld, CrosschainRun, CrosschainTxSpec, effective_start_delay, first_transaction_readiness
from chaincoord.errors import ContractError, InvariantViolation, MissingVariant, NoActiveKeyset, SidechainError
from chaincoord.finality import block_interval, catchup_probability, truncation_bias_bound
from chaincoord.gas import SECONDS_PER_YEAR, WEI_PER_ETHER, update_price
from chaincoord.models import (
    AdversaryKind,
    AdversarySection,
    ComparisonRow,
    CrosschainReport,
    Exposure,
    ParticipantSpend,
    PinStrategy,
    ReversionReport,
    RootReport,
    RunReport,
    ScenarioConfig,
    SidechainReport,
)
from chaincoord.sidechain import (
    PinLevel,
    PinningClient,
    PinTarget,
    Sidechain,
    archive,
    encode_blob,
    pin_final_time,
    registration_calls,
    restore,
    sidechain_id,
)

logger = logging.getLogger(__name__)

ACCOUNT_FUNDING = 10**24
DRAIN_BLOCK_LIMIT = 1_000
NODE_PORT = 30303

# same-second events run in this order
PRIORITY = {
    "workload": 0,
    "pin": 1,
    "intermediate-block": 2,
    "spam": 3,
    "retire": 4,
    "root-block": 5,
}


class EventQueue:
    def __init__(self):
        self._pq: List[Tuple[int, int, int, str, Any]] = []
        self._seq = itertools.count()

    def push(self, when: int, kind: str, payload: Any = None):
        heapq.heappush(self._pq, (when, PRIORITY[kind], next(self._seq), kind, payload))

    def pop(self) -> Tuple[int, str, Any]:
        when, _, _, kind, payload = heapq.heappop(self._pq)
        return when, kind, payload

    def next_time(self) -> int:
        return self._pq[0][0]

    def __len__(self):
        return len(self._pq)


@dataclass
class PinnedChain:
    """A sidechain or intermediate chain with its pinning client and pin stack"""

    label: str
    role: str
    sidechain: Sidechain
    client: PinningClient
    stack: Tuple[PinLevel, ...]
    strategy: PinStrategy
    pin_interval: int
    via: Optional[str] = None
    workload_interval: Optional[int] = None
    lifetime: Optional[int] = None
    skipped: int = 0
    retiring: bool = False
    archive_verified: Optional[bool] = None


class PrivateMiner:
    """Withholds a private branch forked at the honest head and publishes it once it is
    strictly heavier and the first honest block after the fork is z-final. A race is
    abandoned when the honest branch leads by `max_deficit` blocks."""

    def __init__(self, section: AdversarySection, depth: int, account: bytes):
        self.q = section.q
        self.start = section.start
        self.max_deficit = section.max_deficit
        self.depth = depth
        self.account = account
        self.fork: Optional[Block] = None
        self.fork_state: Optional[WorldState] = None
        self.target: Optional[bytes] = None
        self.withheld: List[int] = []
        self.attacks = 0
        self.successes = 0
        self.abandoned = 0

    def active(self, now: int) -> bool:
        return now >= self.start

    def _begin(self, node: ChainNode):
        self.fork = node.chain.head_block
        # a race can outlive the chain's retained states
        self.fork_state = node.chain.state_at().copy()
        self.target = None
        self.withheld = []

    def found_block(self, node: ChainNode, now: int):
        if self.fork is None:
            self._begin(node)
        self.withheld.append(now)
        self._maybe_release(node)

    def honest_block(self, node: ChainNode, block: Block):
        if self.fork is None:
            self._begin(node)
            return
        if self.target is None and block.header.parent_hash == self.fork.hash:
            self.target = block.hash
        honest = node.chain.height - self.fork.number
        if honest - len(self.withheld) >= self.max_deficit:
            self.attacks += 1
            self.abandoned += 1
            logger.debug(f"private miner abandons race at deficit {honest - len(self.withheld)}")
            self._begin(node)
            return
        self._maybe_release(node)

    def _maybe_release(self, node: ChainNode):
        chain = node.chain
        if self.target is None or not chain.is_canonical(self.target):
            return
        if confirmations(chain, self.target) < self.depth:
            return
        if len(self.withheld) <= chain.height - self.fork.number:
            return
        tip, state = self.fork.hash, self.fork_state
        reorg = None
        for timestamp in self.withheld:
            block = mint_block(chain, self.account, (), timestamp=timestamp, parent=tip, parent_state=state)
            tip, state = block.hash, block.post_state
            _, report = node.add_block(block)
            reorg = report or reorg
        self.attacks += 1
        if reorg is not None and self.target in reorg.reverted:
            self.successes += 1
            logger.warning(f"private branch of {len(self.withheld)} blocks reverted a {self.depth}-final block")
        self._begin(node)

    def report(self) -> ReversionReport:
        rate = self.successes / self.attacks if self.attacks else 0.0
        stderr = math.sqrt(rate * (1.0 - rate) / self.attacks) if self.attacks else 0.0
        return ReversionReport(
            q=self.q,
            confirmations=self.depth,
            attacks=self.attacks,
            successes=self.successes,
            rate=rate,
            stderr=stderr,
            analytic=catchup_probability(self.q, self.depth),
            truncation_bias=truncation_bias_bound(self.q, self.max_deficit),
            abandoned=self.abandoned,
        )


@dataclass
class Spammer:
    account: bytes
    sink: bytes
    rate: float
    tx_gas: int
    start: int
    owed: float = 0.0
    sent: int = 0


@dataclass
class ParticipantInfo:
    label: str
    role: str


class Simulation:
    def __init__(self, config: ScenarioConfig, seed: Optional[int] = None, drain: bool = False):
        settings = get_settings()
        self.config = config
        self.seed = config.run.seed if seed is None else seed
        # keep mining root blocks past the end until submitted pins are included
        self.drain = drain
        self.rng = np.random.default_rng(self.seed)
        self.schedule = config.coordination.gas_schedule()
        self.policy = config.coordination.policy()
        self.price = config.price_state()
        self.prices_seen: List[int] = [self.price.gas_price]
        self.events = EventQueue()
        self.now = 0
        self.retained_states = settings.retained_states
        self.participants: Dict[bytes, ParticipantInfo] = {}
        self.pinned: List[PinnedChain] = []
        self.xtx_runs: List[CrosschainRun] = []
        self._build()

    # ==================== WORLD CONSTRUCTION ====================

    def _account(self, label: str, role: str) -> bytes:
        account = derive_account(f"{self.config.name}/{label}")
        self.participants[account] = ParticipantInfo(label, role)
        return account

    def _build(self):
        config = self.config
        miner = derive_account(f"{config.name}/root-miner")
        initiator = self._account("crosschain-initiator", "initiator")
        pinning = derive_account(f"{config.name}/root/pinning")
        registry = derive_account(f"{config.name}/root/keysets")
        coordination = derive_account(f"{config.name}/root/crosschain")
        authority = derive_account(f"{config.name}/root/registry")

        validators = {
            s.id: tuple(self._account(f"{s.id}/participant{i}", "sidechain") for i in range(s.participants))
            for s in config.sidechains
        }
        validators.update({
            i.id: tuple(self._account(f"{i.id}/validator{k}", "intermediate") for k in range(i.validators))
            for i in config.intermediates
        })

        intermediates: Dict[str, Sidechain] = {}
        for section in config.intermediates:
            members = [
                (sidechain_id(s.id), validators[s.id])
                for s in config.sidechains if s.via == section.id
            ]
            intermediates[section.id] = Sidechain.create(
                section.id, validators[section.id], host_pinning=True,
                retained_states=self.retained_states, members=members,
            )
        sidechains = {s.id: Sidechain.create(s.id, validators[s.id], retained_states=self.retained_states) for s in config.sidechains}
        direct = [s for s in config.sidechains if s.strategy is PinStrategy.DIRECT]

        root_members = [(sidechains[s.id].id, validators[s.id]) for s in direct]
        root_members += [(intermediates[i.id].id, validators[i.id]) for i in config.intermediates]
        # hierarchical sidechains stay off the public registry
        self.domains: Dict[str, Tuple[bytes, ...]] = {f"{s.id}.{config.name}": validators[s.id] for s in direct}
        self.domains.update({f"{i.id}.{config.name}": validators[i.id] for i in config.intermediates})
        balances = {account: ACCOUNT_FUNDING for account in self.participants}
        self.spammers: List[Spammer] = []
        for index, adversary in enumerate(config.adversaries):
            if adversary.kind is AdversaryKind.SPAMMER:
                account = self._account(f"spammer{index}", "spammer")
                balances[account] = ACCOUNT_FUNDING
                self.spammers.append(Spammer(
                    account, derive_account(f"{config.name}/spam-sink{index}"), adversary.rate,
                    adversary.tx_gas or self.schedule.pin_tx_gas, adversary.start,
                ))

        chain = genesis(
            balances,
            [
                (authority, "registry", ()),
                (pinning, "pinning", ()),
                (registry, "keyset", (pinning,)),
                (coordination, "crosschain", (registry,)),
            ],
            schedule=self.schedule,
            retained_states=self.retained_states,
            name=f"{config.name}-root",
            calls=registration_calls(pinning, root_members),
        )
        self.root = ChainNode(chain, gas_price=self.price.gas_price)
        self.world = CoordinationWorld(
            root=self.root,
            registry=registry,
            coordination=coordination,
            sidechains={sidechains[s.id].id: sidechains[s.id] for s in direct},
            policy=self.policy,
            miner=miner,
            initiator=initiator,
            block_time=int(round(config.coordination.block_time)),
            wait_for_finality=config.run.wait_for_finality,
        )
        self.intermediates = intermediates
        self.miner_account = miner
        self.authority = authority

        root_level = PinLevel(chain, pinning, self.policy)
        for section in config.intermediates:
            inter = intermediates[section.id]
            client = inter.attach_pin_target(PinTarget(self.root, pinning))
            self.pinned.append(PinnedChain(section.id, "intermediate", inter, client, (root_level,), PinStrategy.DIRECT, section.pin_interval))
        for section in config.sidechains:
            sidechain = sidechains[section.id]
            if section.strategy is PinStrategy.DIRECT:
                target, stack = PinTarget(self.root, pinning), (root_level,)
            else:
                inter = intermediates[section.via]
                target = inter.pin_target()
                stack = (PinLevel(inter.chain, inter.pinning, self.policy, pinned_as=inter.id), root_level)
            client = sidechain.attach_pin_target(target)
            self.pinned.append(PinnedChain(
                section.id, "sidechain", sidechain, client, stack, section.strategy, section.pin_interval,
                section.via, section.workload_interval, section.lifetime,
            ))

        self.private_miner: Optional[PrivateMiner] = None
        for adversary in config.adversaries:
            if adversary.kind is AdversaryKind.PRIVATE_MINER:
                self.private_miner = PrivateMiner(adversary, self.policy.confirmations_required, derive_account(f"{config.name}/private-miner"))

        for section in config.crosschain:
            legs = tuple(
                (sidechains[leg].id, ((f"xtx/{section.id}", index + 1),))
                for index, leg in enumerate(section.legs)
            )
            spec = CrosschainTxSpec(
                codec.digest(f"xtx:{section.id}".encode("utf-8")), legs, section.timeout_blocks,
                section.submit_time, section.fault, section.faulty_leg,
            )
            self.xtx_runs.append(CrosschainRun(spec, self.world))

    # ==================== EVENTS ====================

    def _schedule_initial(self):
        duration = self.config.run.duration
        for sid in self.world.sidechains:
            self.world.rotate_keyset(sid)
        self._register_domains()
        self.events.push(self._next_block_time(0), "root-block")
        for section in self.config.intermediates:
            self.events.push(section.block_time, "intermediate-block", (section.id, section.block_time))
        for pinned in self.pinned:
            self.events.push(pinned.pin_interval, "pin", pinned)
            if pinned.workload_interval:
                self.events.push(max(1, pinned.workload_interval // 2), "workload", pinned)
            if pinned.lifetime is not None and pinned.lifetime <= duration:
                self.events.push(pinned.lifetime, "retire", pinned)
        for spammer in self.spammers:
            self.events.push(max(1, spammer.start), "spam", spammer)

    def _register_domains(self):
        """Publish each public chain's bootstrap nodes in the root registration authority"""
        for domain, validators in self.domains.items():
            payload = ContractCall(self.authority, "registry_register", (
                domain,
                tuple((f"node{i}.{domain}", NODE_PORT) for i in range(len(validators))),
                tuple(codec.digest(v) for v in validators),
            ))
            gas = self.root.required_gas(payload)
            if gas > self.schedule.block_gas_limit:
                logger.warning(f"Skipping registration of {domain}: {gas} gas exceeds the block gas limit")
                continue
            self.root.submit(validators[0], payload, gas)
        logger.debug(f"{len(self.domains)} domain registrations submitted")

    def registered_domain(self, domain: str):
        return self.root.chain.view(self.authority, "registry_lookup", domain)

    def _next_block_time(self, now: int) -> int:
        return now + block_interval(self.rng, self.config.coordination.block_time, self.config.run.stochastic_blocks)

    def _dispatch(self, kind: str, payload: Any):
        handler: Callable = {
            "workload": self._on_workload,
            "pin": self._on_pin,
            "intermediate-block": self._on_intermediate_block,
            "spam": self._on_spam,
            "retire": self._on_retire,
            "root-block": self._on_root_block,
        }[kind]
        handler(payload)

    def _on_workload(self, pinned: PinnedChain):
        sidechain = pinned.sidechain
        if pinned.retiring or sidechain.archived:
            return
        sidechain.set_values(((f"{pinned.label}/tick", self.now),))
        sidechain.mint(self.now)
        self.events.push(self.now + pinned.workload_interval, "workload", pinned)

    def _on_pin(self, pinned: PinnedChain):
        if pinned.sidechain.archived:
            return
        if pinned.client.has_new_head():
            pinned.client.pin_now(self.now)
        else:
            pinned.skipped += 1
        self.events.push(self.now + pinned.pin_interval, "pin", pinned)

    def _on_intermediate_block(self, payload: Tuple[str, int]):
        label, interval = payload
        inter = self.intermediates[label]
        if not inter.archived:
            # intermediate chains produce a block every interval, empty or not
            inter.mint(self.now, allow_empty=True)
        self.events.push(self.now + interval, "intermediate-block", payload)

    def _on_spam(self, spammer: Spammer):
        spammer.owed += spammer.rate
        count = int(spammer.owed)
        spammer.owed -= count
        payload = ValueTransfer(spammer.sink, 0, spammer.tx_gas - self.schedule.intrinsic_tx_gas)
        for _ in range(count):
            self.root.submit(spammer.account, payload, spammer.tx_gas)
        spammer.sent += count
        self.events.push(self.now + 1, "spam", spammer)

    def _on_retire(self, pinned: PinnedChain):
        pinned.retiring = True
        if pinned.client.has_new_head():
            pinned.client.pin_now(self.now)
        logger.info(f"{pinned.label}: retiring at t={self.now}, waiting for a final pin of its head")

    def _on_root_block(self, _payload):
        miner = self.private_miner
        if miner is not None and miner.active(self.now) and self.rng.random() < miner.q:
            miner.found_block(self.root, self.now)
        else:
            block = mint_block(self.root.chain, self.miner_account, self.root.mempool, timestamp=self.now)
            self.root.add_block(block)
            utilization = block.header.gas_used / block.header.gas_limit
            self.price = update_price(self.price, utilization)
            self.root.gas_price = self.price.gas_price
            self.prices_seen.append(self.price.gas_price)
            logger.debug(f"root block {block.number}: {len(block.transactions)} txs, utilization {utilization:.3f}")
            if miner is not None and miner.active(self.now):
                miner.honest_block(self.root, block)

        self._advance_crosschain()
        self._try_archives()
        for sidechain in self.world.sidechains.values():
            if not sidechain.archived:
                sidechain.mint(self.now)
        self.events.push(self._next_block_time(self.now), "root-block")

    def _advance_crosschain(self):
        self.world.clock = self.now
        for run in self.xtx_runs:
            if run.done:
                continue
            try:
                run.advance(self.now)
            except NoActiveKeyset:
                logger.debug(f"crosschain {codec.short(run.spec.tx_id)} waits for active keysets")
            except SidechainError as e:
                run.failed = type(e).__name__
                logger.warning(f"crosschain {codec.short(run.spec.tx_id)} failed: {e}")
            if run.mixed:
                raise InvariantViolation(f"crosschain {codec.short(run.spec.tx_id)} resolved differently across legs")

    def _try_archives(self):
        for pinned in self.pinned:
            if not pinned.retiring or pinned.sidechain.archived:
                continue
            try:
                blob = archive(pinned.sidechain, pinned.stack)
            except SidechainError:
                continue
            try:
                restored = restore(encode_blob(blob), pinned.stack)
                pinned.archive_verified = restored.commitment == pinned.sidechain.commitment
            except SidechainError as e:
                pinned.archive_verified = False
                logger.warning(f"{pinned.label}: restore check failed ({e})")
            logger.info(f"{pinned.label}: archived at t={self.now}, restore verified={pinned.archive_verified}")

    # ==================== RUN ====================

    def run(self) -> RunReport:
        duration = self.config.run.duration
        logger.info(f"Run '{self.config.name}' seed={self.seed} for {duration}s")
        self._schedule_initial()
        while self.events and self.events.next_time() <= duration:
            when, kind, payload = self.events.pop()
            if when < self.now:
                raise InvariantViolation(f"event {kind} at t={when} precedes the clock t={self.now}")
            self.now = when
            self._dispatch(kind, payload)
        if self.drain:
            self._drain_pins()
        report = self._report()
        logger.info(
            f"Run '{self.config.name}' finished: {report.root.blocks} root blocks, "
            f"{report.root.pin_transactions} pins, {report.root.reorgs} reorgs"
        )
        return report

    def _pins_pending(self) -> bool:
        return any(isinstance(tx.payload, ContractCall) and tx.payload.op == "pin_add" for tx in self.root.mempool)

    def _drain_pins(self):
        """Only root blocks are produced here; every other event is dropped"""
        blocks = 0
        while self.events and self._pins_pending() and blocks < DRAIN_BLOCK_LIMIT:
            when, kind, payload = self.events.pop()
            if kind != "root-block":
                continue
            self.now = when
            self._dispatch(kind, payload)
            blocks += 1
        if self._pins_pending():
            logger.warning(f"Run '{self.config.name}': pins still pending after {blocks} drain blocks")
        else:
            logger.debug(f"Run '{self.config.name}': submitted pins included after {blocks} drain block(s)")

    # ==================== REPORT ====================

    def _root_report(self) -> Tuple[RootReport, Dict[bytes, List[int]]]:
        chain = self.root.chain
        spam_accounts = {s.account for s in self.spammers}
        counts = {"pin": 0, "keyset": 0, "xtx": 0, "registry": 0, "spam": 0}
        transactions = gas_used = pin_gas = pin_fees = 0
        ledger: Dict[bytes, List[int]] = {}
        for number in range(chain.base_number + 1, chain.height + 1):
            block = chain.canonical_block(number)
            if block.header.gas_used > block.header.gas_limit:
                raise InvariantViolation(f"root block {number} used more gas than its limit")
            gas_used += block.header.gas_used
            for tx, receipt in zip(block.transactions, block.receipts):
                transactions += 1
                entry = ledger.setdefault(tx.sender, [0, 0, 0])
                entry[0] += 1
                entry[1] += receipt.gas_used
                entry[2] += receipt.gas_used * tx.gas_price
                payload = tx.payload
                if isinstance(payload, ContractCall):
                    family = payload.op.split("_")[0]
                    if family in counts:
                        counts[family] += 1
                    if family == "pin":
                        pin_gas += receipt.gas_used
                        pin_fees += receipt.gas_used * tx.gas_price
                elif tx.sender in spam_accounts:
                    counts["spam"] += 1
        blocks = chain.height - chain.base_number
        capacity = blocks * self.schedule.block_gas_limit
        root = RootReport(
            blocks=blocks,
            transactions=transactions,
            pin_transactions=counts["pin"],
            pin_gas_used=pin_gas,
            pin_fees_wei=pin_fees,
            keyset_transactions=counts["keyset"],
            crosschain_transactions=counts["xtx"],
            registry_transactions=counts["registry"],
            spam_transactions=counts["spam"],
            gas_used=gas_used,
            utilization=gas_used / capacity if capacity else 0.0,
            gas_price_start=self.prices_seen[0],
            gas_price_end=self.prices_seen[-1],
            gas_price_max=max(self.prices_seen),
            reorgs=len(chain.reorgs),
            max_reorg_depth=max((r.depth for r in chain.reorgs), default=0),
        )
        return root, ledger

    def _spend(self, ledger: Dict[bytes, List[int]]) -> List[ParticipantSpend]:
        eth = self.config.prices.eth_price
        duration = self.config.run.duration
        rows = []
        for account, info in self.participants.items():
            count, gas, wei = ledger.get(account, (0, 0, 0))
            usd = wei * eth / WEI_PER_ETHER
            rows.append(ParticipantSpend(
                participant=info.label,
                role=info.role,
                transactions=count,
                gas_used=gas,
                usd=round(usd, 6),
                usd_per_year=round(usd * SECONDS_PER_YEAR / duration, 2),
            ))
        return rows

    def _pinned_report(self, pinned: PinnedChain) -> SidechainReport:
        client = pinned.client
        client.observe()
        history = {}
        level = pinned.stack[0]
        try:
            for record in level.chain.view(level.contract, "pin_history", pinned.sidechain.id):
                history[(record.block_number, record.block_hash)] = record
        except ContractError:
            history = {}
        for submission in client.submissions:
            record = history.get((submission.number, submission.block_hash))
            if record is not None and submission.final_at is None:
                final_at = pin_final_time(record, pinned.stack)
                if final_at is not None:
                    submission.final_at = max(final_at, submission.submitted_at)

        latencies = np.array([s.latency for s in client.submissions if s.latency is not None], dtype=float)
        delays = np.array([s.finality_delay for s in client.submissions if s.finality_delay is not None], dtype=float)
        hierarchical = pinned.strategy is PinStrategy.HIERARCHICAL
        readiness = None
        if pinned.role == "sidechain" and not hierarchical:
            readiness = first_transaction_readiness(pinned.sidechain.id, self.root, self.world.registry, self.policy)
        return SidechainReport(
            sidechain=pinned.label,
            role=pinned.role,
            strategy=pinned.strategy,
            via=pinned.via,
            blocks=pinned.sidechain.chain.height,
            pins_submitted=len(client.submissions),
            pins_included=sum(1 for s in client.submissions if s.included_at is not None),
            pins_final=int(delays.size),
            pins_skipped=pinned.skipped,
            resubmissions=sum(s.resubmissions for s in client.submissions),
            reverted_pins=sum(1 for s in client.submissions if s.reverted),
            latency_mean=float(latencies.mean()) if latencies.size else None,
            latency_p50=float(np.percentile(latencies, 50)) if latencies.size else None,
            latency_p95=float(np.percentile(latencies, 95)) if latencies.size else None,
            latency_max=float(latencies.max()) if latencies.size else None,
            finality_delay_mean=float(delays.mean()) if delays.size else None,
            finality_delay_max=float(delays.max()) if delays.size else None,
            # one chain to watch per level of the pin stack
            observation_duty=len(pinned.stack),
            exposure=Exposure.PUBLIC if pinned.stack[0].chain is self.root.chain else Exposure.PRIVATE,
            keyset_readiness=readiness,
            archive_verified=pinned.archive_verified,
        )

    def _crosschain_report(self) -> CrosschainReport:
        outcomes = [run.outcome for run in self.xtx_runs]
        delays = [effective_start_delay(run, self.policy) for run in self.xtx_runs]
        delays = [d for d in delays if d is not None]
        return CrosschainReport(
            submitted=sum(1 for run in self.xtx_runs if run.start_tx is not None),
            committed=outcomes.count(XtxState.COMMITTED),
            ignored=outcomes.count(XtxState.IGNORED),
            mixed=sum(1 for run in self.xtx_runs if run.mixed),
            failed=sum(1 for run in self.xtx_runs if run.failed),
            undecided=sum(1 for run in self.xtx_runs if not run.done),
            start_delay_mean=float(np.mean(delays)) if delays else None,
        )

    def _report(self) -> RunReport:
        root, ledger = self._root_report()
        return RunReport(
            scenario=self.config.name,
            seed=self.seed,
            duration=self.config.run.duration,
            root=root,
            sidechains=[self._pinned_report(p) for p in self.pinned],
            spend=self._spend(ledger),
            crosschain=self._crosschain_report(),
            reversion=[self.private_miner.report()] if self.private_miner else [],
        )


def run(config: ScenarioConfig, seed: Optional[int] = None) -> RunReport:
    """Execute one scenario; identical (config, seed) pairs give identical reports"""
    return Simulation(config, seed).run()


# ==================== STRATEGY COMPARISON ====================

def _variant(config: ScenarioConfig, strategy: PinStrategy) -> ScenarioConfig:
    via = config.intermediates[0].id if strategy is PinStrategy.HIERARCHICAL else None
    sidechains = [s.model_copy(update={"strategy": strategy, "via": via}) for s in config.sidechains]
    intermediates = config.intermediates[:1] if strategy is PinStrategy.HIERARCHICAL else []
    return config.model_copy(update={
        "name": f"{config.name}-{strategy.value}",
        "sidechains": sidechains,
        "intermediates": intermediates,
        "crosschain": [],
    })


def _comparison_row(config: ScenarioConfig, strategy: PinStrategy, report: RunReport) -> ComparisonRow:
    """Root-chain load as measured on the variant's canonical root chain"""
    duration = config.run.duration
    root = report.root
    usd = root.pin_fees_wei * config.prices.eth_price / WEI_PER_ETHER
    members = [s for s in report.sidechains if s.role == "sidechain"]
    delays = [s.finality_delay_mean for s in members if s.finality_delay_mean is not None]
    return ComparisonRow(
        strategy=strategy,
        sidechains=len(config.sidechains),
        root_transactions=root.pin_transactions,
        root_tx_per_day=root.pin_transactions * 86_400 / duration,
        root_gas=root.pin_gas_used,
        usd_per_year=round(usd * SECONDS_PER_YEAR / duration, 2),
        finality_delay_mean=float(np.mean(delays)) if delays else None,
        observation_duty=max(s.observation_duty for s in members),
        exposure=Exposure.PRIVATE if any(s.exposure is Exposure.PRIVATE for s in members) else Exposure.PUBLIC,
    )


def compare_strategies(config: ScenarioConfig, seed: Optional[int] = None) -> List[ComparisonRow]:
    """Run every sidechain pinned directly, then all of them through the first intermediate chain.

    Each variant keeps producing root blocks after the run until its last round of pins is
    on the root chain, so every pin round is counted.
    """
    if not config.sidechains:
        raise MissingVariant("the scenario declares no sidechains to pin")
    if not config.intermediates:
        raise MissingVariant("the hierarchical variant needs an [intermediate] chain")
    rows = []
    for strategy in (PinStrategy.DIRECT, PinStrategy.HIERARCHICAL):
        variant = _variant(config, strategy)
        report = Simulation(variant, seed, drain=True).run()
        rows.append(_comparison_row(variant, strategy, report))
    logger.info(f"Compared pinning strategies for {len(config.sidechains)} sidechain(s)")
    return rows
