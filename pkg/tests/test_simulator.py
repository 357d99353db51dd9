import pytest

from chaincoord.chain import ChainNode, derive_account, genesis, mint_block
from chaincoord.errors import MissingVariant, StatePruned
from chaincoord.finality import catchup_probability
from chaincoord.models import AdversaryKind, AdversarySection, Exposure, PinStrategy
from chaincoord.scenario import load_scenario, parse_scenario
from chaincoord.sidechain import sidechain_id
from chaincoord.simulator import EventQueue, PrivateMiner, Simulation, compare_strategies, run

from conftest import SCENARIOS


def by_label(report):
    return {s.sidechain: s for s in report.sidechains}


def test_event_order_within_a_second():
    queue = EventQueue()
    queue.push(5, "root-block")
    queue.push(5, "workload", "a")
    queue.push(3, "retire")
    queue.push(5, "pin")
    queue.push(5, "workload", "b")
    assert [queue.pop()[1:] for _ in range(len(queue))] == [
        ("retire", None), ("workload", "a"), ("workload", "b"), ("pin", None), ("root-block", None),
    ]


class TestQuietDefault:
    @pytest.fixture(scope="class")
    def simulation(self):
        config = load_scenario(SCENARIOS / "quiet-default.scenario")
        simulation = Simulation(config)
        simulation.report = simulation.run()
        return simulation

    def test_keyset_readiness_is_the_finality_time(self, simulation):
        for label in ("alpha", "beta"):
            assert by_label(simulation.report)[label].keyset_readiness == 168

    def test_crosschain_commits(self, simulation):
        crosschain = simulation.report.crosschain
        assert (crosschain.submitted, crosschain.committed, crosschain.mixed) == (1, 1, 0)
        assert crosschain.start_delay_mean >= 168
        values = [s.ledger_items() for s in simulation.world.sidechains.values()]
        assert sorted(v["xtx/swap-1"] for v in values) == [1, 2]

    def test_pins_reach_finality(self, simulation):
        report = simulation.report
        alpha = by_label(report)["alpha"]
        assert alpha.pins_submitted == 6
        assert alpha.pins_final >= 5
        assert alpha.exposure is Exposure.PUBLIC
        assert alpha.finality_delay_mean >= 168
        assert report.root.pin_transactions == sum(s.pins_included for s in report.sidechains)
        assert report.root.reorgs == 0

    def test_public_chains_are_registered(self, simulation):
        assert simulation.report.root.registry_transactions == 2
        entry = simulation.registered_domain("alpha.quiet-default")
        assert entry.owner == simulation.world.sidechains[sidechain_id("alpha")].validators[0]
        assert len(entry.node_endpoints) == len(entry.key_fingerprints) == 3

    def test_quiet_chain_keeps_its_price(self, simulation):
        root = simulation.report.root
        assert root.gas_price_end == root.gas_price_start
        assert root.utilization < 0.01

    def test_spend_per_participant(self, simulation):
        spend = {row.participant: row for row in simulation.report.spend}
        assert spend["crosschain-initiator"].transactions >= 2
        assert spend["alpha/participant0"].usd > 0

    def test_deterministic(self, simulation):
        again = run(load_scenario(SCENARIOS / "quiet-default.scenario"))
        assert again.model_dump_json() == simulation.report.model_dump_json()

    def test_seed_override(self):
        config = parse_scenario("[run]\nduration = 600\n[sidechain]\nid = a\npin_interval = 300\n")
        assert run(config, seed=9).seed == 9


def test_spam_saturates_blocks_and_raises_price(scenario_path):
    report = run(load_scenario(scenario_path("spam")))
    assert report.root.utilization > 0.99
    assert report.root.spam_transactions > 0
    assert report.root.gas_price_end > report.root.gas_price_start
    assert report.root.gas_price_max >= report.root.gas_price_end


def test_hierarchical_archive_is_restored(scenario_path):
    report = run(load_scenario(scenario_path("hierarchical")))
    reports = by_label(report)
    assert reports["delta"].archive_verified is True
    assert reports["gamma"].archive_verified is None
    assert reports["gamma"].observation_duty == 2
    assert reports["gamma"].exposure is Exposure.PRIVATE
    assert reports["consortium"].role == "intermediate"
    assert report.root.keyset_transactions == 0
    assert report.root.registry_transactions == 1


@pytest.mark.slow
def test_private_miner_reports_reversions(scenario_path):
    report = run(load_scenario(scenario_path("private-miner")))
    assert len(report.reversion) == 1
    reversion = report.reversion[0]
    assert (reversion.q, reversion.confirmations) == (0.3, 3)
    assert reversion.analytic == pytest.approx(catchup_probability(0.3, 3))
    assert reversion.successes <= reversion.attacks
    assert reversion.rate <= reversion.analytic + 3 * reversion.stderr
    assert report.root.reorgs >= reversion.successes


class TestPrivateMiner:
    def test_race_outlives_retained_states(self, miner):
        chain = genesis({}, retained_states=2, name="short-memory")
        node = ChainNode(chain)
        attacker = PrivateMiner(
            AdversarySection(kind=AdversaryKind.PRIVATE_MINER, q=0.4), depth=2, account=derive_account("attacker"),
        )
        for t in range(1, 7):
            block = mint_block(chain, miner, (), timestamp=t)
            node.add_block(block)
            attacker.honest_block(node, block)
        fork = attacker.fork
        with pytest.raises(StatePruned):
            chain.state_at(fork.hash)

        for t in range(7, 13):
            attacker.found_block(node, t)
        assert (attacker.attacks, attacker.successes) == (1, 1)
        assert chain.height == 7
        assert chain.reorgs[-1].depth == 5
        assert chain.canonical_block(fork.number + 1).header.miner == derive_account("attacker")

    def test_abandons_at_max_deficit(self, miner):
        chain = genesis({}, name="deficit")
        node = ChainNode(chain)
        attacker = PrivateMiner(
            AdversarySection(kind=AdversaryKind.PRIVATE_MINER, q=0.1, max_deficit=20), depth=3, account=derive_account("attacker"),
        )
        for t in range(1, 22):
            block = mint_block(chain, miner, (), timestamp=t)
            node.add_block(block)
            attacker.honest_block(node, block)
        assert (attacker.attacks, attacker.abandoned, attacker.successes) == (1, 1, 0)
        assert chain.reorgs == []

    @pytest.mark.slow
    def test_long_race_past_the_retention_horizon(self):
        config = parse_scenario(
            "[run]\nseed = 3\nduration = 172800\nstochastic_blocks = true\n"
            "[coordination]\nconfirmations = 3\n"
            "[sidechain]\nid = alpha\npin_interval = 1800\n"
            "[adversary]\nkind = private-miner\nq = 0.49\nmax_deficit = 1000\n"
        )
        (reversion,) = run(config).reversion
        assert reversion.attacks > 0
        assert reversion.successes <= reversion.attacks


class TestCompare:
    def test_needs_both_variants(self, scenario_path):
        with pytest.raises(MissingVariant):
            compare_strategies(load_scenario(scenario_path("quiet-default")))
        with pytest.raises(MissingVariant):
            compare_strategies(parse_scenario("[intermediate]\nid = hub\n"))

    def test_counts_are_measured_on_the_root_chain(self):
        text = "[run]\nduration = 7200\n[intermediate]\nid = hub\n" + "".join(f"[sidechain]\nid = s{i}\n" for i in range(3))
        direct, hierarchical = compare_strategies(parse_scenario(text))
        # the round submitted at the last second is included once the run drains
        assert (direct.root_transactions, hierarchical.root_transactions) == (6, 2)
        assert direct.root_tx_per_day == 72.0
        assert (direct.root_gas, hierarchical.root_gas) == (6 * 64_972, 2 * 64_972)
        assert (direct.observation_duty, hierarchical.observation_duty) == (1, 2)
        assert 0 < hierarchical.usd_per_year < direct.usd_per_year

    @pytest.mark.slow
    def test_fifty_sidechains(self, scenario_path):
        direct, hierarchical = compare_strategies(load_scenario(scenario_path("fifty-sidechains")))
        assert direct.strategy is PinStrategy.DIRECT
        assert (direct.root_transactions, hierarchical.root_transactions) == (1200, 24)
        assert hierarchical.root_gas * 50 == direct.root_gas
        assert hierarchical.usd_per_year < direct.usd_per_year
        assert hierarchical.finality_delay_mean > direct.finality_delay_mean
        assert (direct.observation_duty, hierarchical.observation_duty) == (1, 2)
        assert (direct.exposure, hierarchical.exposure) == (Exposure.PUBLIC, Exposure.PRIVATE)
