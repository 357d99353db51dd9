"""
Gas accounting, throughput ceilings, congestion pricing, fiat costs and nonce horizons.

Reference prices (5.95 gwei, US$150 per ether) are back-solved so that hourly pinning
for a year costs about US$508; they are illustrative, not measured market data.
"""

import logging
import math
from typing import Iterable, List, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from chaincoord.errors import DomainError, GasOutOfRange

logger = logging.getLogger(__name__)

WEI_PER_ETHER = 10**18
GWEI = 10**9
SECONDS_PER_YEAR = 8760 * 3600
JULIAN_YEAR_SECONDS = 31_557_600

REFERENCE_GAS_PRICE = 5_950_000_000  # 5.95 gwei
REFERENCE_ETH_PRICE = 150.0


class GasSchedule(BaseModel):
    model_config = ConfigDict(frozen=True)

    block_gas_limit: int = 8_000_000
    intrinsic_tx_gas: int = 21_000
    pin_tx_gas: int = 64_972
    keyset_store_gas: int = 60_000
    word_store_gas: int = 20_000
    block_time: float = 14.0

    @model_validator(mode="after")
    def _check_bounds(self):
        costs = {
            "pin_tx_gas": self.pin_tx_gas,
            "keyset activation": self.intrinsic_tx_gas + self.keyset_store_gas,
            "single-word op": self.intrinsic_tx_gas + self.word_store_gas,
        }
        for name, cost in costs.items():
            if not self.intrinsic_tx_gas <= cost <= self.block_gas_limit:
                raise ValueError(f"{name} ({cost}) must lie between intrinsic gas and the block gas limit")
        if self.block_time <= 0:
            raise ValueError("block_time must be positive")
        return self


DEFAULT_GAS_SCHEDULE = GasSchedule()


class PriceState(BaseModel):
    model_config = ConfigDict(frozen=True)

    gas_price: int = REFERENCE_GAS_PRICE
    target_utilization: float = Field(default=0.5, gt=0.0, le=1.0)
    sensitivity: float = Field(default=0.25, ge=0.0)
    floor: int = Field(default=1, ge=1)


def contract_op_gas(schedule: GasSchedule, op: str, words: int = 1) -> int:
    """Total gas (intrinsic included) of one coordination-contract operation"""
    if op == "pin_add":
        return schedule.pin_tx_gas
    if op == "keyset_propose":
        return schedule.intrinsic_tx_gas + schedule.keyset_store_gas
    return schedule.intrinsic_tx_gas + schedule.word_store_gas * max(0, words)


def block_throughput(tx_gas: int, schedule: GasSchedule = DEFAULT_GAS_SCHEDULE) -> float:
    """Transactions per second when every block is filled with `tx_gas` transactions"""
    if not schedule.intrinsic_tx_gas <= tx_gas <= schedule.block_gas_limit:
        raise GasOutOfRange(
            f"tx gas {tx_gas} outside [{schedule.intrinsic_tx_gas}, {schedule.block_gas_limit}]"
        )
    return (schedule.block_gas_limit // tx_gas) / schedule.block_time


def update_price(state: PriceState, last_block_utilization: float) -> PriceState:
    if not 0.0 <= last_block_utilization <= 1.0:
        raise DomainError(f"utilization {last_block_utilization} outside [0, 1]")
    factor = 1.0 + state.sensitivity * (last_block_utilization - state.target_utilization)
    # round away from the current price so small prices still move
    if factor > 1.0:
        price = math.ceil(state.gas_price * factor)
    elif factor < 1.0:
        price = math.floor(state.gas_price * factor)
    else:
        price = state.gas_price
    return state.model_copy(update={"gas_price": max(state.floor, price)})


def fiat_cost(gas: int, gas_price: float, eth_price: float) -> float:
    """US dollars paid for `gas` at `gas_price` wei/gas and `eth_price` USD per ether"""
    if gas < 0 or gas_price < 0 or eth_price < 0:
        raise DomainError("gas, gas price and ether price must be non-negative")
    return gas * gas_price * eth_price / WEI_PER_ETHER


def annual_pin_cost(
    schedule: GasSchedule,
    pin_interval: float,
    gas_price: float = REFERENCE_GAS_PRICE,
    eth_price: float = REFERENCE_ETH_PRICE,
) -> float:
    if pin_interval <= 0:
        raise DomainError("pin_interval must be positive")
    return (SECONDS_PER_YEAR / pin_interval) * fiat_cost(schedule.pin_tx_gas, gas_price, eth_price)


def nonce_wraparound_years(nonce_bits: int, tx_rate: float) -> float:
    # 63 bits for a signed 64-bit counter, 64 for the 584 million year figure
    if nonce_bits not in (63, 64):
        raise DomainError("nonce_bits must be 63 or 64")
    if tx_rate <= 0:
        raise DomainError("tx_rate must be positive")
    return 2**nonce_bits / (tx_rate * JULIAN_YEAR_SECONDS)


def registration_gas(
    schedule: GasSchedule = DEFAULT_GAS_SCHEDULE, endpoints: int = 2, fingerprints: int = 1
) -> int:
    """Gas to register one enterprise domain with the registration authority"""
    # domain + owner word, one word per endpoint and per key fingerprint
    return contract_op_gas(schedule, "registry_register", 1 + endpoints + fingerprints)


def root_pin_transactions(duration: float, pin_interval: float, sidechains: int, hierarchical: bool) -> int:
    """Pins landing on the root chain over `duration` seconds"""
    per_chain = math.ceil(duration / pin_interval)
    return per_chain if hierarchical else per_chain * sidechains


def cost_table(
    schedule: GasSchedule = DEFAULT_GAS_SCHEDULE,
    pin_intervals: Iterable[float] = (3600.0,),
    sidechain_counts: Iterable[int] = (1, 10, 50),
    gas_price: float = REFERENCE_GAS_PRICE,
    eth_price: float = REFERENCE_ETH_PRICE,
) -> pd.DataFrame:
    """Yearly root-chain gas and cost of direct versus hierarchical pinning"""
    rows: List[dict] = []
    for interval in pin_intervals:
        for count in sidechain_counts:
            for strategy in ("direct", "hierarchical"):
                pins = root_pin_transactions(SECONDS_PER_YEAR, interval, count, strategy == "hierarchical")
                gas_year = pins * schedule.pin_tx_gas
                rows.append({
                    "strategy": strategy,
                    "pin_interval": interval,
                    "sidechains": count,
                    "mainnet_gas_year": gas_year,
                    "usd_year": round(fiat_cost(gas_year, gas_price, eth_price), 2),
                })
    return pd.DataFrame(rows, columns=["strategy", "pin_interval", "sidechains", "mainnet_gas_year", "usd_year"])


def yearly_cost_from_gas(
    gas: int, duration: float, gas_price: float, eth_price: float, year: Optional[float] = None
) -> float:
    """Scale gas measured over a simulated `duration` up to a year"""
    if duration <= 0:
        raise DomainError("duration must be positive")
    year = year or SECONDS_PER_YEAR
    return fiat_cost(gas, gas_price, eth_price) * year / duration
