from dataclasses import replace

import numpy as np
import pytest

from chaincoord.chain import (
    MAX_NONCE,
    Account,
    BlockContext,
    BlockHeader,
    ChainNode,
    ChainView,
    ContractCall,
    FinalityMode,
    Mempool,
    ReceiptStatus,
    Transaction,
    ValueTransfer,
    WorldState,
    apply_transaction,
    confirmations,
    derive_account,
    genesis,
    mint_block,
)
from chaincoord.errors import (
    BadNonce,
    BlockGasExceeded,
    FinalityViolation,
    InsufficientBalance,
    InvalidBlock,
    NonceOverflow,
    NotCanonical,
    NotFound,
    StatePruned,
    Unauthorized,
    UnknownParent,
)

FUNDING = 10**24


def transfer(sender, nonce, to, amount=100, gas_price=1, gas_limit=21_000, **kwargs):
    return Transaction(sender, nonce, gas_limit, gas_price, ValueTransfer(to, amount), **kwargs)


def funded_state(*accounts) -> WorldState:
    state = WorldState()
    for account in accounts:
        state.put_account(Account(account, 0, FUNDING))
    return state


class TestWorldState:
    def test_revert_restores_entries_and_commitment(self):
        state = WorldState({("a",): 1})
        before = state.commitment
        checkpoint = state.checkpoint()
        state.set(("a",), 2)
        state.set(("b",), 3)
        state.delete(("a",))
        state.revert(checkpoint)
        assert state.get(("a",)) == 1
        assert ("b",) not in state
        assert state.commitment == before

    def test_copy_is_independent(self):
        state = WorldState({("a",): 1})
        clone = state.copy()
        clone.set(("a",), 5)
        assert state.get(("a",)) == 1
        assert state.commitment != clone.commitment

    def test_none_values_are_refused(self):
        with pytest.raises(ValueError):
            WorldState().set(("a",), None)

    def test_scan_by_prefix(self):
        state = WorldState({("x", 2): "b", ("x", 1): "a", ("y", 1): "c"})
        assert [v for _, v in state.scan(("x",))] == ["a", "b"]


class TestTransactions:
    def test_transfer_moves_value_and_charges_gas(self, alice, bob):
        state = funded_state(alice, bob)
        receipt = apply_transaction(state, transfer(alice, 0, bob), 8_000_000)
        assert receipt.success and receipt.gas_used == 21_000
        assert state.account(alice) == Account(alice, 1, FUNDING - 100 - 21_000)
        assert state.account(bob).balance == FUNDING + 100

    def test_fee_goes_to_coinbase(self, alice, bob, miner):
        state = funded_state(alice, bob)
        apply_transaction(state, transfer(alice, 0, bob, gas_price=3), 8_000_000, BlockContext(1, coinbase=miner))
        assert state.account(miner).balance == 63_000

    def test_replay_is_rejected(self, alice, bob):
        state = funded_state(alice, bob)
        tx = transfer(alice, 0, bob)
        apply_transaction(state, tx, 8_000_000)
        with pytest.raises(BadNonce):
            apply_transaction(state, tx, 8_000_000)

    def test_future_nonce_is_rejected(self, alice, bob):
        with pytest.raises(BadNonce):
            apply_transaction(funded_state(alice, bob), transfer(alice, 1, bob), 8_000_000)

    def test_unsigned(self, alice, bob):
        with pytest.raises(Unauthorized):
            apply_transaction(funded_state(alice, bob), transfer(alice, 0, bob, authorized=False), 8_000_000)

    def test_balance_must_cover_gas_and_value(self, alice, bob):
        poor = derive_account("poor")
        state = funded_state(alice)
        state.put_account(Account(poor, 0, 21_000))
        with pytest.raises(InsufficientBalance):
            apply_transaction(state, transfer(poor, 0, alice, amount=1), 8_000_000)

    def test_block_gas_budget(self, alice, bob):
        with pytest.raises(BlockGasExceeded):
            apply_transaction(funded_state(alice, bob), transfer(alice, 0, bob), 20_999)

    def test_out_of_gas_consumes_limit_and_nonce(self, alice, bob):
        state = funded_state(alice, bob)
        tx = Transaction(alice, 0, 21_000, 1, ValueTransfer(bob, 100, data_gas=500))
        receipt = apply_transaction(state, tx, 8_000_000)
        assert receipt.status is ReceiptStatus.OUT_OF_GAS
        assert state.account(alice) == Account(alice, 1, FUNDING - 21_000)
        assert state.account(bob).balance == FUNDING

    def test_failed_contract_call_reverts_state(self, alice):
        ledger = derive_account("ledger")
        chain = genesis({alice: FUNDING}, [(ledger, "ledger", ())])
        state = chain.state_at().copy()
        tx = Transaction(alice, 0, 100_000, 1, ContractCall(ledger, "no_such_op", ()))
        receipt = apply_transaction(state, tx, 8_000_000)
        assert receipt.status is ReceiptStatus.REVERTED
        assert "UnknownOperation" in receipt.error
        assert state.account(alice).nonce == 1
        assert dict(state.items()).keys() == dict(chain.state_at().items()).keys()

    def test_nonce_range_on_construction(self, alice, bob):
        with pytest.raises(NonceOverflow):
            transfer(alice, MAX_NONCE + 1, bob)
        with pytest.raises(NonceOverflow):
            transfer(alice, -1, bob)

    def test_nonce_space_exhausted(self, alice, bob):
        state = WorldState()
        state.put_account(Account(alice, MAX_NONCE, FUNDING))
        with pytest.raises(NonceOverflow):
            apply_transaction(state, transfer(alice, MAX_NONCE, bob), 8_000_000)

    def test_randomized_replay_and_reorder_rejection(self):
        rng = np.random.default_rng(42)
        senders = [derive_account(f"sender{i}") for i in range(5)]
        sink = derive_account("sink")
        state = funded_state(*senders)
        applied = []
        for _ in range(300):
            sender = senders[int(rng.integers(len(senders)))]
            nonce = state.account(sender).nonce
            skip = int(rng.integers(1, 4))
            with pytest.raises(BadNonce):
                apply_transaction(state, transfer(sender, nonce + skip, sink), 8_000_000)
            tx = transfer(sender, nonce, sink, amount=int(rng.integers(1, 1000)))
            apply_transaction(state, tx, 8_000_000)
            applied.append(tx)
        for tx in applied:
            with pytest.raises(BadNonce):
                apply_transaction(state, tx, 8_000_000)


class TestBlocks:
    def test_header_layout(self, funded_chain):
        header = funded_chain.head_block.header
        data = header.serialize()
        assert len(data) == 160
        assert BlockHeader.deserialize(data) == header
        with pytest.raises(ValueError):
            BlockHeader.deserialize(data[:-1])

    def test_mint_and_add(self, funded_chain, alice, bob, miner):
        tx = transfer(alice, 0, bob)
        block = mint_block(funded_chain, miner, [tx], timestamp=14)
        head, reorg = funded_chain.add_block(block)
        assert head == block.hash and reorg is None
        assert block.number == 1 and block.header.weight == 1
        assert block.header.gas_used == 21_000
        assert funded_chain.transaction_block(tx.hash).hash == block.hash
        assert funded_chain.state_at().account(bob).balance == FUNDING + 100

    def test_price_order_and_sender_nonce_order(self, funded_chain, alice, bob, miner):
        cheap_first = transfer(alice, 0, bob, gas_price=1)
        pricey_second = transfer(alice, 1, bob, gas_price=50)
        other = transfer(bob, 0, alice, gas_price=10)
        block = mint_block(funded_chain, miner, [pricey_second, cheap_first, other])
        assert [tx.hash for tx in block.transactions] == [other.hash, cheap_first.hash, pricey_second.hash]

    def test_block_gas_limit_keeps_highest_price(self, funded_chain, alice, bob, miner):
        low = transfer(alice, 0, bob, gas_price=1)
        high = transfer(bob, 0, alice, gas_price=9)
        block = mint_block(funded_chain, miner, [low, high], gas_limit=30_000)
        assert block.transactions == (high,)

    def test_rejects_bad_weight(self, funded_chain, miner):
        block = mint_block(funded_chain, miner, [])
        forged = replace(block, header=replace(block.header, weight=7))
        with pytest.raises(InvalidBlock):
            funded_chain.add_block(forged)

    def test_rejects_bad_state_commitment(self, funded_chain, alice, bob, miner):
        block = mint_block(funded_chain, miner, [transfer(alice, 0, bob)])
        forged = replace(block, header=replace(block.header, state_commitment=bytes(32)))
        with pytest.raises(InvalidBlock):
            funded_chain.add_block(forged)

    def test_rejects_unknown_parent(self, funded_chain, miner):
        block = mint_block(funded_chain, miner, [])
        orphan = replace(block, header=replace(block.header, parent_hash=b"\x11" * 32))
        with pytest.raises(UnknownParent):
            funded_chain.add_block(orphan)

    def test_state_pruned_beyond_horizon(self, alice, miner):
        chain = genesis({alice: FUNDING}, retained_states=2)
        root = chain.head
        for t in range(1, 5):
            chain.add_block(mint_block(chain, miner, [], timestamp=t))
        with pytest.raises(StatePruned):
            chain.state_at(root)


class TestForkChoice:
    def test_incumbent_wins_ties_then_heavier_branch_reorgs(self, funded_chain, alice, bob, miner):
        root = funded_chain.head
        tx = transfer(alice, 0, bob)
        main = mint_block(funded_chain, miner, [tx], timestamp=1)
        funded_chain.add_block(main)

        rival = derive_account("rival")
        side1 = mint_block(funded_chain, rival, [], timestamp=2, parent=root)
        head, reorg = funded_chain.add_block(side1)
        assert head == main.hash and reorg is None

        side2 = mint_block(funded_chain, rival, [], timestamp=3, parent=side1.hash)
        head, reorg = funded_chain.add_block(side2)
        assert head == side2.hash
        assert reorg.reverted == (main.hash,)
        assert reorg.adopted == (side1.hash, side2.hash)
        assert reorg.dropped_txs == (tx,)
        assert funded_chain.reorgs == [reorg]
        assert funded_chain.transaction_block(tx.hash) is None
        assert not funded_chain.is_canonical(main.hash)

    def test_uncles_add_weight(self, funded_chain, miner):
        root = funded_chain.head
        funded_chain.add_block(mint_block(funded_chain, miner, [], timestamp=1))
        heavy = mint_block(funded_chain, derive_account("rival"), [], timestamp=2, parent=root, uncle_count=1)
        head, reorg = funded_chain.add_block(heavy)
        assert head == heavy.hash and reorg.depth == 1

    def test_confirmations(self, funded_chain, miner):
        first = mint_block(funded_chain, miner, [], timestamp=1)
        funded_chain.add_block(first)
        for t in (2, 3):
            funded_chain.add_block(mint_block(funded_chain, miner, [], timestamp=t))
        assert confirmations(funded_chain, first.hash) == 2
        with pytest.raises(NotCanonical):
            confirmations(funded_chain, b"\x00" * 32)

    def test_instant_chain_only_extends_head(self, alice, miner):
        chain = genesis({alice: FUNDING}, mode=FinalityMode.INSTANT)
        root = chain.head
        chain.add_block(mint_block(chain, miner, [], timestamp=1))
        sibling = mint_block(chain, derive_account("rival"), [], timestamp=2, parent=root)
        with pytest.raises(FinalityViolation):
            chain.add_block(sibling)
        assert chain.finalized_marker == chain.height


class TestNodes:
    def test_mempool_prunes_included(self, funded_chain, alice, bob, miner):
        pool = Mempool()
        tx = transfer(alice, 0, bob)
        pool.add(tx)
        funded_chain.add_block(mint_block(funded_chain, miner, pool))
        pool.prune(funded_chain)
        assert len(pool) == 0

    def test_wallet_assigns_consecutive_nonces(self, funded_chain, alice, bob):
        node = ChainNode(funded_chain, gas_price=1)
        first = node.submit(alice, ValueTransfer(bob, 1), 21_000)
        second = node.submit(alice, ValueTransfer(bob, 2), 21_000)
        assert (first.nonce, second.nonce) == (0, 1)
        assert len(node.mempool) == 2

    def test_dropped_transaction_is_resigned_after_reorg(self, funded_chain, alice, bob, miner):
        node = ChainNode(funded_chain, gas_price=1)
        root = funded_chain.head
        pending = node.submit(alice, ValueTransfer(bob, 5), 21_000)
        node.add_block(mint_block(funded_chain, miner, node.mempool, timestamp=1))
        assert node.receipt(pending.hash) is not None

        # a competing branch spends alice's nonce 0 on another transaction
        competing = transfer(alice, 0, bob, amount=9)
        rival = derive_account("rival")
        side1 = mint_block(funded_chain, rival, [competing], timestamp=2, parent=root)
        node.add_block(side1)
        _, reorg = node.add_block(mint_block(funded_chain, rival, [], timestamp=3, parent=side1.hash))
        assert reorg is not None

        resigned = node.resolve(pending.hash)
        assert resigned != pending.hash
        assert resigned in node.mempool

        node.add_block(mint_block(funded_chain, miner, node.mempool, timestamp=4))
        block, receipt = node.receipt(pending.hash)
        assert block.number == 3 and receipt.success
        assert funded_chain.state_at().account(alice).nonce == 2
        assert node.wallet(alice).outstanding == []

    def test_included_transactions_are_no_longer_tracked(self, funded_chain, alice, bob, miner):
        node = ChainNode(funded_chain, gas_price=1)
        for amount in range(1, 4):
            node.submit(alice, ValueTransfer(bob, amount), 21_000)
        wallet = node.wallet(alice)
        assert len(wallet.outstanding) == 3
        node.add_block(mint_block(funded_chain, miner, node.mempool, timestamp=1))
        assert wallet.outstanding == []
        assert node.submit(alice, ValueTransfer(bob, 4), 21_000).nonce == 3
        assert len(wallet.outstanding) == 1


class TestContractState:
    REGISTRY = derive_account("registry")

    def registry_chain(self, alice, bob) -> ChainView:
        return genesis({alice: FUNDING, bob: FUNDING}, deployments=[(self.REGISTRY, "registry", ())], name="test")

    def register(self, node, sender, domain):
        payload = ContractCall(self.REGISTRY, "registry_register", (domain, (("10.0.0.1", 30303),), (b"fp",)))
        return node.submit(sender, payload, node.required_gas(payload))

    def test_replay_from_genesis_reproduces_commitment(self, alice, bob, miner):
        chain = self.registry_chain(alice, bob)
        node = ChainNode(chain, gas_price=1)
        self.register(node, alice, "alice.example")
        node.submit(bob, ValueTransfer(alice, 7), 21_000)
        node.add_block(mint_block(chain, miner, node.mempool, timestamp=1))
        self.register(node, bob, "bob.example")
        for t in (2, 3):
            node.add_block(mint_block(chain, miner, node.mempool, timestamp=t))

        replica = self.registry_chain(alice, bob)
        assert replica.head == chain.canonical_block(0).hash
        for number in range(1, chain.height + 1):
            replica.add_block(replace(chain.canonical_block(number), post_state=None))
        assert replica.head == chain.head
        assert replica.state_at().commitment == chain.state_at().commitment
        assert replica.view(self.REGISTRY, "registry_lookup", "bob.example").owner == bob

    def test_lookup_after_reverted_registration(self, alice, bob, miner):
        chain = self.registry_chain(alice, bob)
        node = ChainNode(chain, gas_price=1)
        root = chain.head
        self.register(node, alice, "bank.example")
        node.add_block(mint_block(chain, miner, list(node.mempool), timestamp=1))
        assert chain.view(self.REGISTRY, "registry_lookup", "bank.example").owner == alice

        rival = derive_account("rival")
        side1 = mint_block(chain, rival, [], timestamp=2, parent=root)
        chain.add_block(side1)
        _, reorg = chain.add_block(mint_block(chain, rival, [], timestamp=3, parent=side1.hash))
        assert reorg is not None and reorg.depth == 1
        with pytest.raises(NotFound):
            chain.view(self.REGISTRY, "registry_lookup", "bank.example")
