import pytest

from chaincoord.errors import DomainError, GasOutOfRange
from chaincoord.gas import (
    DEFAULT_GAS_SCHEDULE,
    GWEI,
    REFERENCE_ETH_PRICE,
    REFERENCE_GAS_PRICE,
    GasSchedule,
    PriceState,
    annual_pin_cost,
    block_throughput,
    contract_op_gas,
    cost_table,
    fiat_cost,
    nonce_wraparound_years,
    registration_gas,
    root_pin_transactions,
    update_price,
    yearly_cost_from_gas,
)


class TestThroughput:
    def test_pin_transactions(self):
        assert DEFAULT_GAS_SCHEDULE.block_gas_limit // 64_972 == 123
        assert block_throughput(64_972) == pytest.approx(8.8, abs=0.05)

    def test_minimal_transactions(self):
        assert block_throughput(21_000) == pytest.approx(27.1, abs=0.05)

    def test_block_sized_transactions_per_minute(self):
        assert block_throughput(8_000_000) * 60 == pytest.approx(4.3, abs=0.05)

    @pytest.mark.parametrize("tx_gas", [20_999, 8_000_001, 0])
    def test_out_of_range(self, tx_gas):
        with pytest.raises(GasOutOfRange):
            block_throughput(tx_gas)


class TestSchedule:
    def test_operation_gas(self):
        assert contract_op_gas(DEFAULT_GAS_SCHEDULE, "pin_add") == 64_972
        assert contract_op_gas(DEFAULT_GAS_SCHEDULE, "keyset_propose") == 81_000
        assert contract_op_gas(DEFAULT_GAS_SCHEDULE, "ledger_set", 3) == 81_000

    def test_pin_gas_below_intrinsic_is_refused(self):
        with pytest.raises(ValueError):
            GasSchedule(pin_tx_gas=20_000)

    def test_pin_gas_above_block_limit_is_refused(self):
        with pytest.raises(ValueError):
            GasSchedule(block_gas_limit=60_000)

    def test_registration_bundle(self):
        assert registration_gas() == 21_000 + 4 * 20_000
        assert registration_gas(endpoints=0, fingerprints=0) == 41_000

    def test_registration_bundle_costs_under_a_dollar(self):
        assert fiat_cost(registration_gas(), REFERENCE_GAS_PRICE, REFERENCE_ETH_PRICE) < 1.0


class TestPricing:
    def test_full_block_raises_price(self):
        state = PriceState(gas_price=1_000, floor=1)
        assert update_price(state, 1.0).gas_price == 1_125

    def test_empty_block_lowers_price(self):
        state = PriceState(gas_price=1_000, floor=1)
        assert update_price(state, 0.0).gas_price == 875

    def test_floor_holds(self):
        state = PriceState(gas_price=10, floor=10)
        assert update_price(state, 0.0).gas_price == 10

    def test_target_utilization_is_stable(self):
        state = PriceState(gas_price=5_950_000_000)
        assert update_price(state, 0.5) == state

    def test_small_prices_still_move(self):
        assert update_price(PriceState(gas_price=3, floor=1), 1.0).gas_price == 4
        assert update_price(PriceState(gas_price=3, floor=1), 0.0).gas_price == 2
        assert update_price(PriceState(gas_price=1, floor=1), 1.0).gas_price == 2

    @pytest.mark.parametrize("k", [1, 5, 20])
    def test_full_blocks_grow_geometrically(self, k):
        state = PriceState(gas_price=GWEI)
        for _ in range(k):
            state = update_price(state, 1.0)
        assert state.gas_price >= GWEI * 1.125**k
        assert state.gas_price == pytest.approx(GWEI * 1.125**k, rel=1e-6)

    def test_sustained_congestion_keeps_rising(self):
        state = PriceState(gas_price=GWEI)
        prices = [state.gas_price]
        for _ in range(20):
            state = update_price(state, 0.99)
            prices.append(state.gas_price)
        assert prices == sorted(prices) and prices[-1] > prices[0]

    @pytest.mark.parametrize("utilization", [-0.1, 1.01])
    def test_utilization_domain(self, utilization):
        with pytest.raises(DomainError):
            update_price(PriceState(), utilization)


class TestCosts:
    def test_fiat_cost(self):
        assert fiat_cost(10**9, GWEI, 150.0) == pytest.approx(150.0)

    def test_hourly_pinning_reference_year(self):
        assert annual_pin_cost(DEFAULT_GAS_SCHEDULE, 3600) == pytest.approx(508.0, abs=1.0)

    def test_pin_interval_must_be_positive(self):
        with pytest.raises(DomainError):
            annual_pin_cost(DEFAULT_GAS_SCHEDULE, 0)

    def test_negative_prices(self):
        with pytest.raises(DomainError):
            fiat_cost(1, -1, 150.0)

    def test_root_pin_counts(self):
        assert root_pin_transactions(86_400, 3600, 50, hierarchical=False) == 1200
        assert root_pin_transactions(86_400, 3600, 50, hierarchical=True) == 24

    def test_cost_table_hierarchical_is_one_nth(self):
        table = cost_table(sidechain_counts=[50])
        by_strategy = table.set_index("strategy")["mainnet_gas_year"]
        assert by_strategy["direct"] == 50 * by_strategy["hierarchical"]
        assert list(table.columns) == ["strategy", "pin_interval", "sidechains", "mainnet_gas_year", "usd_year"]

    def test_yearly_scaling(self):
        day = yearly_cost_from_gas(64_972 * 24, 86_400, 5_950_000_000, 150.0)
        assert day == pytest.approx(annual_pin_cost(DEFAULT_GAS_SCHEDULE, 3600), rel=1e-9)


class TestNonceHorizon:
    def test_sixty_four_bits_at_a_thousand_per_second(self):
        assert nonce_wraparound_years(64, 1000) == pytest.approx(5.845e8, rel=1e-3)

    def test_signed_counter_is_half(self):
        assert nonce_wraparound_years(63, 1000) == pytest.approx(nonce_wraparound_years(64, 1000) / 2)

    @pytest.mark.parametrize("bits,rate", [(32, 1.0), (64, 0.0)])
    def test_domain(self, bits, rate):
        with pytest.raises(DomainError):
            nonce_wraparound_years(bits, rate)
