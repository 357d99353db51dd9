import numpy as np
import pytest

from chaincoord.contracts import XtxState
from chaincoord.crosschain import (
    AtomicityHarness,
    CrosschainRun,
    CrosschainTxSpec,
    Fault,
    Schedule,
    effective_start_delay,
    enumerate_schedules,
    first_transaction_readiness,
    keyset_public_key,
    random_schedule,
    run_crosschain,
)
from chaincoord.errors import DuplicateTxId, InvalidSpec, NoActiveKeyset


def harness_world(n_legs=2, **kwargs):
    return AtomicityHarness(n_legs, **kwargs).build_world()


def with_fault(spec, fault, leg=0):
    return CrosschainTxSpec(spec.tx_id, spec.legs, spec.timeout_blocks, 0, fault, leg)


class TestSpec:
    def test_needs_two_distinct_sidechains(self):
        with pytest.raises(InvalidSpec):
            CrosschainTxSpec(b"t" * 32, ((b"a" * 32, ()),), 10)
        with pytest.raises(InvalidSpec):
            CrosschainTxSpec(b"t" * 32, ((b"a" * 32, ()), (b"a" * 32, ())), 10)

    def test_timeout_and_faulty_leg(self):
        legs = ((b"a" * 32, ()), (b"b" * 32, ()))
        with pytest.raises(InvalidSpec):
            CrosschainTxSpec(b"t" * 32, legs, 0)
        with pytest.raises(InvalidSpec):
            CrosschainTxSpec(b"t" * 32, legs, 5, faulty_leg=2)

    def test_keyset_key_size(self):
        assert len(keyset_public_key(b"a" * 32, 1)) == 48
        assert keyset_public_key(b"a" * 32, 1) != keyset_public_key(b"a" * 32, 2)


class TestRuns:
    def test_commit_applies_every_leg(self):
        world, spec = harness_world()
        assert run_crosschain(spec, world) is XtxState.COMMITTED
        for index, (sid, _) in enumerate(spec.legs):
            assert world.sidechains[sid].ledger_items() == {f"leg{index}": index + 1}

    def test_silent_leg_times_out_without_side_effects(self):
        world, spec = harness_world()
        before = {sid: s.commitment for sid, s in world.sidechains.items()}
        assert run_crosschain(with_fault(spec, Fault.SILENT_LEG, 1), world) is XtxState.IGNORED
        assert {sid: s.commitment for sid, s in world.sidechains.items()} == before
        assert world.root.chain.height > spec.timeout_blocks
        assert all(not s.provisional for s in world.sidechains.values())

    def test_stale_keyset_is_ignored(self):
        world, spec = harness_world()
        faulty = spec.legs[0][0]
        assert run_crosschain(with_fault(spec, Fault.STALE_KEYSET, 0), world) is XtxState.IGNORED
        assert world.active_version(faulty) == 2
        assert world.active_version(spec.legs[1][0]) == 1

    def test_duplicate_id(self):
        world, spec = harness_world()
        run_crosschain(spec, world)
        with pytest.raises(DuplicateTxId):
            CrosschainRun(spec, world).submit_start(world.clock)

    def test_legs_need_active_keysets(self):
        world, _ = harness_world()
        spec = CrosschainTxSpec(b"t" * 32, ((b"x" * 32, ()), (b"y" * 32, ())), 10)
        with pytest.raises(NoActiveKeyset):
            CrosschainRun(spec, world).submit_start(0)

    def test_start_delay_is_the_confirmation_depth(self):
        world, spec = harness_world(confirmations=2)
        run = CrosschainRun(spec, world)
        run.submit_start(world.clock)
        while not run.done:
            run.advance(world.clock)
            world.step()
        # included one block after submission, final two blocks later
        assert effective_start_delay(run, world.policy) == 3

    def test_without_waiting_attestations_start_at_inclusion(self):
        world, spec = harness_world()
        world.wait_for_finality = False
        run = CrosschainRun(spec, world)
        run.submit_start(world.clock)
        world.step()
        run.advance(world.clock)
        assert len(run.attestations) == 2

    def test_waiting_holds_attestations(self):
        world, spec = harness_world()
        run = CrosschainRun(spec, world)
        run.submit_start(world.clock)
        world.step()
        run.advance(world.clock)
        assert run.attestations == {}

    def test_keyset_readiness(self):
        world, spec = harness_world(confirmations=2)
        sid = spec.legs[0][0]
        assert first_transaction_readiness(sid, world.root, world.registry, world.policy) is None
        world.step()
        world.step()
        assert first_transaction_readiness(sid, world.root, world.registry, world.policy) == 2
        assert first_transaction_readiness(b"z" * 32, world.root, world.registry, world.policy) is None

    def test_reorg_injection(self):
        world, _ = harness_world()
        for _ in range(3):
            world.step()
        world.inject_reorg(1)
        assert len(world.root.chain.reorgs) == 1
        assert world.root.chain.reorgs[0].depth == 1


def check(results):
    for result in results:
        assert not result.mixed, result.schedule
        assert result.outcome is not None, result.schedule
        assert result.ignored_clean, result.schedule
        assert result.versions_match, result.schedule
        expected = XtxState.COMMITTED if result.schedule.fault is Fault.NONE else XtxState.IGNORED
        assert result.outcome is expected, result.schedule


class TestAtomicity:
    def test_schedule_count(self):
        assert len(list(enumerate_schedules(2))) == 2 * 5 * 5 * 2

    def test_two_legs_exhaustive(self):
        harness = AtomicityHarness(2)
        check(harness.run_all(list(enumerate_schedules(2))))

    def test_three_legs_exhaustive(self):
        harness = AtomicityHarness(3)
        check(harness.run_all(list(enumerate_schedules(3))))

    def test_random_schedule_is_seeded(self):
        a = random_schedule(np.random.default_rng(3), 5)
        assert a == random_schedule(np.random.default_rng(3), 5)
        assert sorted(a.order) == list(range(5))

    @pytest.mark.slow
    @pytest.mark.parametrize("n_legs", [4, 5, 6])
    def test_randomized_wide_transactions(self, n_legs):
        rng = np.random.default_rng(1000 + n_legs)
        harness = AtomicityHarness(n_legs)
        schedules = [random_schedule(rng, n_legs) for _ in range(3_334)]
        check(harness.run_all(schedules))


def test_reorg_between_attestations_and_coordination():
    harness = AtomicityHarness(2)
    result = harness.execute(Schedule(order=(1, 0), reorg_after=2))
    assert result.outcome is XtxState.COMMITTED
    assert not result.mixed
