"""
Chain core: accounts, transactions, blocks, fork choice and reorg mechanics.

Used for the probabilistic-finality coordination chain and for the instant-finality
private chains (sidechains and intermediate pinning chains). Signatures are modelled
by the `authorized` flag on a transaction; the chain still enforces nonce discipline,
gas budgets and balances exactly.
"""

import heapq
import logging
import struct
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from chaincoord import codec, contracts
from chaincoord.errors import (
    BadNonce,
    BlockGasExceeded,
    ContractError,
    FinalityViolation,
    InsufficientBalance,
    InvalidBlock,
    NonceOverflow,
    NotCanonical,
    StatePruned,
    TransactionError,
    Unauthorized,
    UnknownParent,
)
from chaincoord.gas import DEFAULT_GAS_SCHEDULE, GasSchedule, contract_op_gas

logger = logging.getLogger(__name__)

MAX_NONCE = 2**63 - 1
ZERO_HASH = bytes(32)
ZERO_ADDRESS = bytes(20)
DEPLOY_WORDS = 4

_MISSING = object()


class FinalityMode(str, Enum):
    PROBABILISTIC = "probabilistic"
    INSTANT = "instant"


def derive_account(label: str) -> bytes:
    """Twenty-byte truncated digest, standing in for an account derived from a public key"""
    return codec.digest(label.encode("utf-8"))[-20:]


def contract_address(sender: bytes, nonce: int) -> bytes:
    return codec.digest(codec.encode((sender, nonce)))[-20:]


# ==================== TRANSACTIONS ====================

@codec.register
@dataclass(frozen=True)
class ValueTransfer:
    to: bytes
    amount: int = 0
    data_gas: int = 0  # calldata-sized cost on top of the intrinsic gas


@codec.register
@dataclass(frozen=True)
class ContractCall:
    contract: bytes
    op: str
    args: tuple = ()


@codec.register
@dataclass(frozen=True)
class ContractCreate:
    kind: str
    links: tuple = ()


Payload = Union[ValueTransfer, ContractCall, ContractCreate]


@codec.register
@dataclass(frozen=True)
class Transaction:
    sender: bytes
    nonce: int
    gas_limit: int
    gas_price: int
    payload: Payload
    authorized: bool = True

    def __post_init__(self):
        if not 0 <= self.nonce <= MAX_NONCE:
            raise NonceOverflow(f"nonce {self.nonce} outside the 63-bit range")
        if self.gas_limit < 0 or self.gas_price < 0:
            raise ValueError("gas limit and gas price must be non-negative")

    @cached_property
    def hash(self) -> bytes:
        return codec.digest(codec.encode(self))


@codec.register
@dataclass(frozen=True)
class Account:
    id: bytes
    nonce: int = 0
    balance: int = 0


class ReceiptStatus(str, Enum):
    SUCCESS = "success"
    REVERTED = "reverted"
    OUT_OF_GAS = "out_of_gas"


@dataclass(frozen=True)
class Receipt:
    tx_hash: bytes
    status: ReceiptStatus
    gas_used: int
    error: Optional[str] = None
    created: Optional[bytes] = None

    @property
    def success(self) -> bool:
        return self.status is ReceiptStatus.SUCCESS


@dataclass(frozen=True)
class BlockContext:
    number: int
    timestamp: int = 0
    coinbase: Optional[bytes] = None


# ==================== WORLD STATE ====================

class WorldState:
    """Flat keyed store with an incremental multiset commitment and a revert journal"""

    def __init__(self, entries: Optional[Mapping[Any, Any]] = None, accumulator: Optional[int] = None):
        self._entries: Dict[Any, Any] = dict(entries or {})
        if accumulator is None:
            accumulator = 0
            for key, value in self._entries.items():
                accumulator = (accumulator + codec.entry_hash(key, value)) % codec.COMMITMENT_MODULUS
        self._acc = accumulator
        self._journal: List[Tuple[Any, Any]] = []

    def get(self, key, default=None):
        return self._entries.get(key, default)

    def __contains__(self, key) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def _write(self, key, value):
        old = self._entries.get(key, _MISSING)
        self._journal.append((key, old))
        if old is not _MISSING:
            self._acc = (self._acc - codec.entry_hash(key, old)) % codec.COMMITMENT_MODULUS
        if value is _MISSING:
            del self._entries[key]
        else:
            self._entries[key] = value
            self._acc = (self._acc + codec.entry_hash(key, value)) % codec.COMMITMENT_MODULUS

    def set(self, key, value):
        if value is None:
            raise ValueError("use delete() to remove a key")
        self._write(key, value)

    def delete(self, key):
        if key in self._entries:
            self._write(key, _MISSING)

    def checkpoint(self) -> int:
        return len(self._journal)

    def revert(self, checkpoint: int):
        while len(self._journal) > checkpoint:
            key, old = self._journal.pop()
            current = self._entries.get(key, _MISSING)
            if current is not _MISSING:
                self._acc = (self._acc - codec.entry_hash(key, current)) % codec.COMMITMENT_MODULUS
                del self._entries[key]
            if old is not _MISSING:
                self._entries[key] = old
                self._acc = (self._acc + codec.entry_hash(key, old)) % codec.COMMITMENT_MODULUS

    def copy(self) -> "WorldState":
        return WorldState(self._entries, self._acc)

    def scan(self, prefix: tuple) -> Iterator[Tuple[Any, Any]]:
        n = len(prefix)
        matches = [
            (key, value) for key, value in self._entries.items()
            if isinstance(key, tuple) and key[:n] == prefix
        ]
        return iter(sorted(matches, key=lambda kv: codec.encode(kv[0])))

    def items(self) -> Tuple[Tuple[Any, Any], ...]:
        return codec.pairs(self._entries)

    @property
    def commitment(self) -> bytes:
        return codec.commitment_of(self._acc)

    def account(self, account_id: bytes) -> Account:
        return self._entries.get(("account", account_id)) or Account(account_id)

    def put_account(self, account: Account):
        self.set(("account", account.id), account)


# ==================== BLOCKS ====================

_HEADER_LAYOUT = struct.Struct(">32sQQ20sQ32s32sIQQ")


@codec.register
@dataclass(frozen=True)
class BlockHeader:
    parent_hash: bytes
    number: int
    weight: int
    miner: bytes
    timestamp: int
    tx_commitment: bytes
    state_commitment: bytes
    uncle_count: int = 0
    gas_used: int = 0
    gas_limit: int = 0

    def serialize(self) -> bytes:
        """Canonical bytes of every field except the hash, fixed order, big-endian"""
        return _HEADER_LAYOUT.pack(
            self.parent_hash, self.number, self.weight, self.miner, self.timestamp,
            self.tx_commitment, self.state_commitment, self.uncle_count, self.gas_used, self.gas_limit,
        )

    @classmethod
    def deserialize(cls, data: bytes) -> "BlockHeader":
        if len(data) != _HEADER_LAYOUT.size:
            raise ValueError(f"header must be {_HEADER_LAYOUT.size} bytes, got {len(data)}")
        return cls(*_HEADER_LAYOUT.unpack(data))

    @cached_property
    def hash(self) -> bytes:
        return codec.digest(self.serialize())


def tx_commitment(transactions: Sequence[Transaction]) -> bytes:
    return codec.digest(codec.encode(tuple(tx.hash for tx in transactions)))


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: Tuple[Transaction, ...] = ()
    receipts: Tuple[Receipt, ...] = ()
    post_state: Optional[WorldState] = field(default=None, compare=False, repr=False)

    @property
    def hash(self) -> bytes:
        return self.header.hash

    @property
    def number(self) -> int:
        return self.header.number


@dataclass(frozen=True)
class ReorgReport:
    reverted: Tuple[bytes, ...]
    adopted: Tuple[bytes, ...]
    dropped_txs: Tuple[Transaction, ...]

    @property
    def depth(self) -> int:
        return len(self.reverted)


# ==================== EXECUTION ====================

def execution_gas(state: WorldState, payload: Payload, schedule: GasSchedule) -> int:
    """Gas on top of the intrinsic cost"""
    if isinstance(payload, ValueTransfer):
        return payload.data_gas
    if isinstance(payload, ContractCreate):
        return schedule.word_store_gas * DEPLOY_WORDS
    words = contracts.storage_words(state, payload.contract, payload.op, payload.args)
    return contract_op_gas(schedule, payload.op, words) - schedule.intrinsic_tx_gas


def _execute(state: WorldState, tx: Transaction, ctx: BlockContext) -> Optional[bytes]:
    payload = tx.payload
    if isinstance(payload, ValueTransfer):
        sender = state.account(tx.sender)
        state.put_account(replace(sender, balance=sender.balance - payload.amount))
        receiver = state.account(payload.to)
        state.put_account(replace(receiver, balance=receiver.balance + payload.amount))
        return None
    if isinstance(payload, ContractCreate):
        address = contract_address(tx.sender, tx.nonce)
        contracts.deploy(state, address, payload.kind, payload.links)
        return address
    call_ctx = contracts.CallContext(caller=tx.sender, block_number=ctx.number, timestamp=ctx.timestamp)
    contracts.execute_call(state, payload.contract, call_ctx, payload.op, payload.args)
    return None


def apply_transaction(
    state: WorldState,
    tx: Transaction,
    gas_budget_left: int,
    ctx: Optional[BlockContext] = None,
    schedule: GasSchedule = DEFAULT_GAS_SCHEDULE,
) -> Receipt:
    """Validate and execute one transaction in place.

    Raises a TransactionError when the transaction cannot be included at all. Contract
    failures and out-of-gas still consume gas and the nonce but discard state changes.
    """
    ctx = ctx or BlockContext(number=0)
    if not tx.authorized:
        raise Unauthorized(f"transaction from {codec.short(tx.sender)} is not signed")
    account = state.account(tx.sender)
    if tx.nonce != account.nonce:
        raise BadNonce(f"nonce {tx.nonce} but account {codec.short(tx.sender)} is at {account.nonce}")
    if account.nonce >= MAX_NONCE:
        raise NonceOverflow(f"account {codec.short(tx.sender)} exhausted its nonce space")
    if tx.gas_limit > gas_budget_left:
        raise BlockGasExceeded(f"gas limit {tx.gas_limit} exceeds remaining block gas {gas_budget_left}")
    value = tx.payload.amount if isinstance(tx.payload, ValueTransfer) else 0
    if account.balance < tx.gas_limit * tx.gas_price + value:
        raise InsufficientBalance(f"account {codec.short(tx.sender)} cannot cover gas and value")

    required = schedule.intrinsic_tx_gas + execution_gas(state, tx.payload, schedule)
    checkpoint = state.checkpoint()
    created = None
    error = None
    if tx.gas_limit < required:
        status, gas_used = ReceiptStatus.OUT_OF_GAS, tx.gas_limit
    else:
        status, gas_used = ReceiptStatus.SUCCESS, required
        try:
            created = _execute(state, tx, ctx)
        except ContractError as e:
            state.revert(checkpoint)
            status, error = ReceiptStatus.REVERTED, f"{type(e).__name__}: {e}"

    sender = state.account(tx.sender)
    fee = gas_used * tx.gas_price
    state.put_account(replace(sender, nonce=sender.nonce + 1, balance=sender.balance - fee))
    if ctx.coinbase is not None and fee:
        miner = state.account(ctx.coinbase)
        state.put_account(replace(miner, balance=miner.balance + fee))
    return Receipt(tx.hash, status, gas_used, error, created)


# ==================== CHAIN VIEW ====================

class ChainView:
    """Blocks known to one node, the heaviest head and the canonical index"""

    def __init__(
        self,
        root: Block,
        root_state: WorldState,
        mode: FinalityMode = FinalityMode.PROBABILISTIC,
        schedule: GasSchedule = DEFAULT_GAS_SCHEDULE,
        retained_states: int = 512,
        name: str = "chain",
    ):
        if root.header.state_commitment != root_state.commitment:
            raise InvalidBlock("root state does not match its header commitment")
        self.name = name
        self.mode = mode
        self.schedule = schedule
        self.retained_states = max(2, retained_states)
        self.base_number = root.number
        self.blocks: Dict[bytes, Block] = {root.hash: root}
        self.head = root.hash
        self.canonical: List[bytes] = [root.hash]
        self.reorgs: List[ReorgReport] = []
        self._states: Dict[bytes, WorldState] = {root.hash: root_state.copy()}
        self._state_order = deque([root.hash])
        self._tx_index: Dict[bytes, int] = {}

    # lookups

    @property
    def head_block(self) -> Block:
        return self.blocks[self.head]

    @property
    def height(self) -> int:
        return self.head_block.number

    @property
    def finalized_marker(self) -> Optional[int]:
        return self.height if self.mode is FinalityMode.INSTANT else None

    def header(self, block_hash: bytes) -> BlockHeader:
        return self.blocks[block_hash].header

    def is_canonical(self, block_hash: bytes) -> bool:
        block = self.blocks.get(block_hash)
        if block is None:
            return False
        index = block.number - self.base_number
        return 0 <= index < len(self.canonical) and self.canonical[index] == block_hash

    def canonical_block(self, number: int) -> Block:
        index = number - self.base_number
        if not 0 <= index < len(self.canonical):
            raise NotCanonical(f"{self.name} has no canonical block {number}")
        return self.blocks[self.canonical[index]]

    def transaction_block(self, tx_hash: bytes) -> Optional[Block]:
        """Canonical block including the transaction, if any"""
        number = self._tx_index.get(tx_hash)
        return None if number is None else self.canonical_block(number)

    def state_at(self, block_hash: Optional[bytes] = None) -> WorldState:
        block_hash = block_hash or self.head
        state = self._states.get(block_hash)
        if state is None:
            raise StatePruned(f"{self.name} no longer holds the state of {codec.short(block_hash)}")
        return state

    def view(self, address: bytes, op: str, *args, at: Optional[bytes] = None):
        return contracts.view(self.state_at(at), address, op, *args)

    def account_nonce(self, account_id: bytes) -> int:
        return self.state_at().account(account_id).nonce

    # growth

    def _retain(self, block_hash: bytes, state: WorldState):
        self._states[block_hash] = state
        self._state_order.append(block_hash)
        while len(self._state_order) > self.retained_states:
            old = self._state_order.popleft()
            if old != self.head:
                self._states.pop(old, None)

    def _replay(self, parent_state: WorldState, block: Block) -> WorldState:
        state = parent_state.copy()
        header = block.header
        ctx = BlockContext(number=header.number, timestamp=header.timestamp, coinbase=header.miner)
        used = 0
        for tx, expected in zip(block.transactions, block.receipts):
            try:
                receipt = apply_transaction(state, tx, header.gas_limit - used, ctx, self.schedule)
            except TransactionError as e:
                raise InvalidBlock(f"block {header.number} carries an invalid transaction: {e}") from e
            if receipt != expected:
                raise InvalidBlock(f"receipt mismatch for {codec.short(tx.hash)}")
            used += receipt.gas_used
        if used != header.gas_used:
            raise InvalidBlock("gas_used does not match the executed body")
        return state

    def add_block(self, block: Block) -> Tuple[bytes, Optional[ReorgReport]]:
        if block.hash in self.blocks:
            return self.head, None
        header = block.header
        parent = self.blocks.get(header.parent_hash)
        if parent is None:
            raise UnknownParent(f"{self.name} does not know parent {codec.short(header.parent_hash)}")
        if header.number != parent.number + 1:
            raise InvalidBlock("block number must follow its parent")
        if header.weight != parent.header.weight + 1 + header.uncle_count:
            raise InvalidBlock("weight must be parent weight + 1 + uncle_count")
        if header.gas_used > header.gas_limit:
            raise InvalidBlock("block uses more gas than its limit")
        if len(block.transactions) != len(block.receipts) or header.tx_commitment != tx_commitment(block.transactions):
            raise InvalidBlock("transaction commitment mismatch")
        if self.mode is FinalityMode.INSTANT and header.parent_hash != self.head:
            raise FinalityViolation(f"{self.name} only appends to its final head")

        state = block.post_state
        if state is None or state.commitment != header.state_commitment:
            state = self._replay(self.state_at(header.parent_hash), block)
        if state.commitment != header.state_commitment:
            raise InvalidBlock("state commitment mismatch")

        self.blocks[block.hash] = replace(block, post_state=None)
        self._retain(block.hash, state)
        new_head, reorg = fork_choice(self, header)
        logger.debug(f"{self.name}: block {header.number} {codec.short(block.hash)} head={codec.short(new_head)}")
        return new_head, reorg


def genesis(
    balances: Mapping[bytes, int],
    deployments: Iterable[Tuple[bytes, str, tuple]] = (),
    extra: Optional[Mapping[Any, Any]] = None,
    mode: FinalityMode = FinalityMode.PROBABILISTIC,
    schedule: GasSchedule = DEFAULT_GAS_SCHEDULE,
    timestamp: int = 0,
    retained_states: int = 512,
    name: str = "chain",
    calls: Iterable[Tuple[bytes, bytes, str, tuple]] = (),
) -> ChainView:
    """Block 0 with pre-funded accounts and pre-deployed contracts.

    `calls` are (caller, contract, op, args) executed against the genesis state, so contracts
    can start with registered members.
    """
    state = WorldState()
    for account_id, balance in balances.items():
        state.put_account(Account(account_id, 0, balance))
    for address, kind, links in deployments:
        contracts.deploy(state, address, kind, links)
    for key, value in (extra or {}).items():
        state.set(key, value)
    for caller, address, op, args in calls:
        contracts.execute_call(state, address, contracts.CallContext(caller, 0, timestamp), op, args)
    header = BlockHeader(
        parent_hash=ZERO_HASH,
        number=0,
        weight=0,
        miner=ZERO_ADDRESS,
        timestamp=timestamp,
        tx_commitment=tx_commitment(()),
        state_commitment=state.commitment,
        gas_limit=schedule.block_gas_limit,
    )
    return ChainView(Block(header), state.copy(), mode, schedule, retained_states, name)


def _price_ordered(mempool: Iterable[Transaction]):
    """Yield (tx, sender_queue) pairs: highest price first, nonce order within a sender"""
    queues: Dict[bytes, List[Transaction]] = {}
    arrival: Dict[bytes, int] = {}
    for index, tx in enumerate(mempool):
        queues.setdefault(tx.sender, []).append(tx)
        arrival.setdefault(tx.hash, index)
    heap = []
    for sender, txs in queues.items():
        txs.sort(key=lambda t: (t.nonce, arrival[t.hash]))
        heapq.heappush(heap, (-txs[0].gas_price, arrival[txs[0].hash], sender))
    return heap, queues, arrival


def mint_block(
    chain: ChainView,
    miner: bytes,
    mempool: Iterable[Transaction],
    gas_limit: Optional[int] = None,
    timestamp: Optional[int] = None,
    parent: Optional[bytes] = None,
    uncle_count: int = 0,
    parent_state: Optional[WorldState] = None,
) -> Block:
    """Build a child of `parent` (default head) greedily by descending gas price.

    `parent_state` stands in for the parent's post-state once the chain has pruned it.
    """
    gas_limit = chain.schedule.block_gas_limit if gas_limit is None else gas_limit
    parent_block = chain.blocks[parent or chain.head]
    parent_header = parent_block.header
    timestamp = parent_header.timestamp + 1 if timestamp is None else timestamp
    state = (chain.state_at(parent_block.hash) if parent_state is None else parent_state).copy()
    ctx = BlockContext(number=parent_header.number + 1, timestamp=timestamp, coinbase=miner)

    heap, queues, arrival = _price_ordered(mempool)
    included: List[Transaction] = []
    receipts: List[Receipt] = []
    used = 0
    while heap and gas_limit - used >= chain.schedule.intrinsic_tx_gas:
        _, _, sender = heapq.heappop(heap)
        queue = queues[sender]
        tx = queue.pop(0)
        try:
            receipt = apply_transaction(state, tx, gas_limit - used, ctx, chain.schedule)
        except BadNonce:
            if tx.nonce < state.account(sender).nonce and queue:
                # already included elsewhere; the sender's next transaction may still fit
                heapq.heappush(heap, (-queue[0].gas_price, arrival[queue[0].hash], sender))
            continue
        except TransactionError:
            continue
        included.append(tx)
        receipts.append(receipt)
        used += receipt.gas_used
        if queue:
            heapq.heappush(heap, (-queue[0].gas_price, arrival[queue[0].hash], sender))

    header = BlockHeader(
        parent_hash=parent_block.hash,
        number=parent_header.number + 1,
        weight=parent_header.weight + 1 + uncle_count,
        miner=miner,
        timestamp=timestamp,
        tx_commitment=tx_commitment(included),
        state_commitment=state.commitment,
        uncle_count=uncle_count,
        gas_used=used,
        gas_limit=gas_limit,
    )
    return Block(header, tuple(included), tuple(receipts), post_state=state)


def fork_choice(chain: ChainView, candidate_tip: Union[BlockHeader, bytes]) -> Tuple[bytes, Optional[ReorgReport]]:
    """Switch to `candidate_tip` iff it is strictly heavier than the head (incumbent wins ties)"""
    tip_hash = candidate_tip if isinstance(candidate_tip, bytes) else candidate_tip.hash
    if tip_hash not in chain.blocks:
        raise UnknownParent(f"{chain.name} does not know {codec.short(tip_hash)}")
    tip = chain.blocks[tip_hash]
    if tip.header.weight <= chain.head_block.header.weight:
        return chain.head, None

    adopted: List[bytes] = []
    cursor = tip
    while not chain.is_canonical(cursor.hash):
        adopted.append(cursor.hash)
        parent = chain.blocks.get(cursor.header.parent_hash)
        if parent is None:
            raise UnknownParent(f"{chain.name} is missing an ancestor of {codec.short(tip_hash)}")
        cursor = parent
    adopted.reverse()
    fork_index = cursor.number - chain.base_number
    reverted = tuple(chain.canonical[fork_index + 1:])
    if reverted and chain.mode is FinalityMode.INSTANT:
        raise FinalityViolation(f"{chain.name} cannot revert instant-final blocks")

    for block_hash in reverted:
        for tx in chain.blocks[block_hash].transactions:
            chain._tx_index.pop(tx.hash, None)
    del chain.canonical[fork_index + 1:]
    adopted_hashes = set()
    for block_hash in adopted:
        block = chain.blocks[block_hash]
        chain.canonical.append(block_hash)
        for tx in block.transactions:
            chain._tx_index[tx.hash] = block.number
            adopted_hashes.add(tx.hash)
    chain.head = tip_hash

    if not reverted:
        return chain.head, None
    dropped = tuple(
        tx for block_hash in reverted for tx in chain.blocks[block_hash].transactions
        if tx.hash not in adopted_hashes
    )
    report = ReorgReport(reverted=reverted, adopted=tuple(adopted), dropped_txs=dropped)
    chain.reorgs.append(report)
    logger.info(
        f"{chain.name}: reorg depth {report.depth} at block {cursor.number}, "
        f"{len(adopted)} adopted, {len(dropped)} txs dropped"
    )
    return chain.head, report


def confirmations(chain: ChainView, block_hash: bytes) -> int:
    if not chain.is_canonical(block_hash):
        raise NotCanonical(f"{codec.short(block_hash)} is not on the canonical {chain.name}")
    return chain.height - chain.blocks[block_hash].number


# ==================== MEMPOOL AND WALLETS ====================

class Mempool:
    """Pending transactions in arrival order"""

    def __init__(self):
        self._txs: Dict[bytes, Transaction] = {}

    def add(self, tx: Transaction):
        self._txs.setdefault(tx.hash, tx)

    def remove(self, tx_hashes: Iterable[bytes]):
        for tx_hash in tx_hashes:
            self._txs.pop(tx_hash, None)

    def __contains__(self, tx_hash: bytes) -> bool:
        return tx_hash in self._txs

    def __iter__(self) -> Iterator[Transaction]:
        return iter(list(self._txs.values()))

    def __len__(self) -> int:
        return len(self._txs)

    def prune(self, chain: ChainView):
        """Drop transactions already included or made stale by the canonical chain"""
        state = chain.state_at()
        stale = [
            tx_hash for tx_hash, tx in self._txs.items()
            if chain.transaction_block(tx_hash) is not None or tx.nonce < state.account(tx.sender).nonce
        ]
        self.remove(stale)


class Wallet:
    """Nonce assignment for one account on one chain.

    Only transactions not yet on the canonical chain are tracked. After a reorg drops some
    included ones they are reinstated, and `reconcile` re-signs every tracked transaction
    with fresh nonces starting at the account's head nonce.
    """

    def __init__(self, account: bytes, chain: ChainView, mempool: Mempool, label: str = ""):
        self.account = account
        self.chain = chain
        self.mempool = mempool
        self.label = label or codec.short(account)
        self.outstanding: List[Transaction] = []

    def _next_nonce(self) -> int:
        head_nonce = self.chain.account_nonce(self.account)
        if self.outstanding:
            return max(head_nonce, self.outstanding[-1].nonce + 1)
        return head_nonce

    def submit(self, payload: Payload, gas_limit: int, gas_price: int, authorized: bool = True) -> Transaction:
        tx = Transaction(self.account, self._next_nonce(), gas_limit, gas_price, payload, authorized)
        self.mempool.add(tx)
        self.outstanding.append(tx)
        return tx

    def settle(self):
        """Stop tracking transactions the canonical chain has included"""
        self.outstanding = [tx for tx in self.outstanding if self.chain.transaction_block(tx.hash) is None]

    def reinstate(self, dropped: Iterable[Transaction]):
        """Track again transactions that a reorg took off the canonical chain"""
        known = {tx.hash for tx in self.outstanding}
        returned = [tx for tx in dropped if tx.hash not in known]
        self.outstanding = sorted(self.outstanding + returned, key=lambda tx: tx.nonce)

    def reconcile(self) -> List[Tuple[Transaction, Transaction]]:
        """Forget included transactions; re-sign dropped ones. Returns (old, new) pairs."""
        self.settle()
        if all(tx.hash in self.mempool for tx in self.outstanding):
            return []
        nonce = self.chain.account_nonce(self.account)
        resigned = []
        fresh = []
        for old in self.outstanding:
            self.mempool.remove([old.hash])
            new = replace(old, nonce=nonce)
            nonce += 1
            self.mempool.add(new)
            fresh.append(new)
            if new.hash != old.hash:
                resigned.append((old, new))
        self.outstanding = fresh
        if resigned:
            logger.info(f"{self.label}: re-signed {len(resigned)} dropped transaction(s) on {self.chain.name}")
        return resigned


class ChainNode:
    """A chain as seen by the local participants: its mempool, one wallet per account and the
    current gas price. Re-signed transactions are tracked so callers can follow a hash."""

    def __init__(self, chain: ChainView, gas_price: int = 0):
        self.chain = chain
        self.mempool = Mempool()
        self.gas_price = gas_price
        self._wallets: Dict[bytes, Wallet] = {}
        self._renamed: Dict[bytes, bytes] = {}

    @property
    def name(self) -> str:
        return self.chain.name

    def wallet(self, account: bytes) -> Wallet:
        if account not in self._wallets:
            self._wallets[account] = Wallet(account, self.chain, self.mempool, f"{self.name}/{codec.short(account)}")
        return self._wallets[account]

    def submit(self, sender: bytes, payload: Payload, gas_limit: int, gas_price: Optional[int] = None) -> Transaction:
        return self.wallet(sender).submit(payload, gas_limit, self.gas_price if gas_price is None else gas_price)

    def required_gas(self, payload: Payload) -> int:
        return self.chain.schedule.intrinsic_tx_gas + execution_gas(self.chain.state_at(), payload, self.chain.schedule)

    def add_block(self, block: Block) -> Tuple[bytes, Optional[ReorgReport]]:
        head, reorg = self.chain.add_block(block)
        self.mempool.prune(self.chain)
        if reorg is not None:
            for tx in reorg.dropped_txs:
                if tx.sender in self._wallets:
                    self._wallets[tx.sender].reinstate((tx,))
            self.reconcile()
        for wallet in self._wallets.values():
            wallet.settle()
        return head, reorg

    def reconcile(self) -> List[Tuple[Transaction, Transaction]]:
        resigned = []
        for wallet in self._wallets.values():
            resigned.extend(wallet.reconcile())
        for old, new in resigned:
            self._renamed[old.hash] = new.hash
        return resigned

    def resolve(self, tx_hash: bytes) -> bytes:
        """Latest hash of a transaction that may have been re-signed"""
        while tx_hash in self._renamed:
            tx_hash = self._renamed[tx_hash]
        return tx_hash

    def receipt(self, tx_hash: bytes) -> Optional[Tuple[Block, Receipt]]:
        """Canonical block and receipt of a transaction, following re-signs"""
        tx_hash = self.resolve(tx_hash)
        block = self.chain.transaction_block(tx_hash)
        if block is None:
            return None
        for tx, receipt in zip(block.transactions, block.receipts):
            if tx.hash == tx_hash:
                return block, receipt
        return None
