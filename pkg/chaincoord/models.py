from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic import ValidationError as PydanticValidationError
from typing import List, Optional, Dict, Any
from enum import Enum
from datetime import datetime

from chaincoord.crosschain import Fault
from chaincoord.finality import CONFIRMATION_PRESETS, FinalityPolicy
from chaincoord.gas import REFERENCE_ETH_PRICE, GWEI, GasSchedule, PriceState
from chaincoord.strength import Model, Property


class PinStrategy(str, Enum):
    DIRECT = "direct"
    HIERARCHICAL = "hierarchical"


class AdversaryKind(str, Enum):
    PRIVATE_MINER = "private-miner"
    SPAMMER = "spammer"


class Exposure(str, Enum):
    PUBLIC = "public"
    PRIVATE = "private"


class JobStatus(str, Enum):
    PENDING = "pending"
    PROCESSING = "processing"
    COMPLETED = "completed"
    FAILED = "failed"


# ==================== SCENARIO ====================

class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RunSection(Section):
    seed: int = 0
    duration: int = Field(default=86_400, gt=0)
    stochastic_blocks: bool = False
    wait_for_finality: bool = True


class CoordinationSection(Section):
    block_time: float = Field(default=14.0, gt=0.0)
    block_gas_limit: int = Field(default=8_000_000, gt=0)
    intrinsic_tx_gas: int = Field(default=21_000, gt=0)
    pin_tx_gas: int = Field(default=64_972, gt=0)
    keyset_store_gas: int = Field(default=60_000, gt=0)
    confirmations: int = Field(default=12, ge=1)
    preset: Optional[str] = None
    target_utilization: float = Field(default=0.5, gt=0.0, le=1.0)
    price_sensitivity: float = Field(default=0.25, ge=0.0)

    @model_validator(mode="after")
    def known_preset(self):
        if self.preset is not None and self.preset not in CONFIRMATION_PRESETS:
            raise ValueError(f"unknown confirmation preset '{self.preset}'")
        return self

    @model_validator(mode="after")
    def consistent_gas_schedule(self):
        try:
            self.gas_schedule()
        except PydanticValidationError as e:
            raise ValueError("; ".join(error["msg"].removeprefix("Value error, ") for error in e.errors())) from None
        return self

    def gas_schedule(self) -> GasSchedule:
        return GasSchedule(
            block_gas_limit=self.block_gas_limit,
            intrinsic_tx_gas=self.intrinsic_tx_gas,
            pin_tx_gas=self.pin_tx_gas,
            keyset_store_gas=self.keyset_store_gas,
            block_time=self.block_time,
        )

    def policy(self) -> FinalityPolicy:
        if self.preset:
            return FinalityPolicy.preset(self.preset, self.block_time)
        return FinalityPolicy(confirmations_required=self.confirmations, block_time_target=self.block_time)


class PricesSection(Section):
    """Reference prices are back-solved illustration values, not market data"""

    gas_price_gwei: float = Field(default=5.95, gt=0.0)
    eth_price: float = Field(default=REFERENCE_ETH_PRICE, gt=0.0)

    @model_validator(mode="after")
    def at_least_one_wei(self):
        if self.gas_price < 1:
            raise ValueError(f"gas_price_gwei {self.gas_price_gwei} rounds to less than one wei")
        return self

    @property
    def gas_price(self) -> int:
        return int(round(self.gas_price_gwei * GWEI))


class IntermediateSection(Section):
    id: str
    validators: int = Field(default=4, ge=1)
    pin_interval: int = Field(default=3600, gt=0)
    block_time: int = Field(default=5, gt=0)


class SidechainSection(Section):
    id: str
    participants: int = Field(default=3, ge=1)
    strategy: PinStrategy = PinStrategy.DIRECT
    via: Optional[str] = None
    pin_interval: int = Field(default=3600, gt=0)
    tx_interval: Optional[int] = Field(default=None, gt=0)
    lifetime: Optional[int] = Field(default=None, gt=0)

    @property
    def workload_interval(self) -> int:
        return self.tx_interval or self.pin_interval


class AdversarySection(Section):
    kind: AdversaryKind
    q: Optional[float] = Field(default=None, ge=0.0, lt=1.0)
    rate: Optional[float] = Field(default=None, gt=0.0)
    tx_gas: Optional[int] = Field(default=None, gt=0)
    start: int = Field(default=0, ge=0)
    max_deficit: int = Field(default=50, ge=20)

    @model_validator(mode="after")
    def kind_parameters(self):
        if self.kind is AdversaryKind.PRIVATE_MINER and self.q is None:
            raise ValueError("a private-miner adversary needs q")
        if self.kind is AdversaryKind.SPAMMER and self.rate is None:
            raise ValueError("a spammer adversary needs rate")
        return self


class CrosschainSection(Section):
    id: str
    legs: List[str] = Field(min_length=2)
    timeout_blocks: int = Field(default=40, ge=1)
    submit_time: int = Field(default=0, ge=0)
    fault: Fault = Fault.NONE
    faulty_leg: int = Field(default=0, ge=0)


class ScenarioConfig(Section):
    name: str = "scenario"
    run: RunSection = RunSection()
    coordination: CoordinationSection = CoordinationSection()
    prices: PricesSection = PricesSection()
    intermediates: List[IntermediateSection] = []
    sidechains: List[SidechainSection] = []
    adversaries: List[AdversarySection] = []
    crosschain: List[CrosschainSection] = []

    def price_state(self) -> PriceState:
        return PriceState(
            gas_price=self.prices.gas_price,
            target_utilization=self.coordination.target_utilization,
            sensitivity=self.coordination.price_sensitivity,
            floor=self.prices.gas_price,
        )


# ==================== REPORTS ====================

class Report(BaseModel):
    model_config = ConfigDict(frozen=True)


class SidechainReport(Report):
    sidechain: str
    role: str = "sidechain"
    strategy: PinStrategy
    via: Optional[str] = None
    blocks: int
    pins_submitted: int
    pins_included: int
    pins_final: int
    pins_skipped: int
    resubmissions: int
    reverted_pins: int
    latency_mean: Optional[float] = None
    latency_p50: Optional[float] = None
    latency_p95: Optional[float] = None
    latency_max: Optional[float] = None
    finality_delay_mean: Optional[float] = None
    finality_delay_max: Optional[float] = None
    observation_duty: int
    exposure: Exposure
    keyset_readiness: Optional[int] = None
    archive_verified: Optional[bool] = None


class RootReport(Report):
    blocks: int
    transactions: int
    pin_transactions: int
    pin_gas_used: int
    pin_fees_wei: int
    keyset_transactions: int
    crosschain_transactions: int
    registry_transactions: int
    spam_transactions: int
    gas_used: int
    utilization: float
    gas_price_start: int
    gas_price_end: int
    gas_price_max: int
    reorgs: int
    max_reorg_depth: int


class ParticipantSpend(Report):
    participant: str
    role: str
    transactions: int
    gas_used: int
    usd: float
    usd_per_year: float


class CrosschainReport(Report):
    submitted: int = 0
    committed: int = 0
    ignored: int = 0
    mixed: int = 0
    failed: int = 0
    undecided: int = 0
    start_delay_mean: Optional[float] = None


class ReversionReport(Report):
    q: float
    confirmations: int
    attacks: int
    successes: int
    rate: float
    stderr: float
    analytic: float
    truncation_bias: float
    abandoned: int


class RunReport(Report):
    scenario: str
    seed: int
    duration: int
    root: RootReport
    sidechains: List[SidechainReport] = []
    spend: List[ParticipantSpend] = []
    crosschain: CrosschainReport = CrosschainReport()
    reversion: List[ReversionReport] = []


class ComparisonRow(Report):
    strategy: PinStrategy
    sidechains: int
    root_transactions: int
    root_tx_per_day: float
    root_gas: int
    usd_per_year: float
    finality_delay_mean: Optional[float] = None
    observation_duty: int
    exposure: Exposure


# ==================== SERVICE ====================

class RunRequest(BaseModel):
    scenario: str
    seed: Optional[int] = None


class CompareRequest(BaseModel):
    scenario: str


class StrengthRequest(BaseModel):
    bits: Optional[int] = Field(default=None, gt=0)
    truncate: Optional[int] = Field(default=None, gt=0)
    scheme: Optional[str] = None
    property: Property
    model: Model = Model.CLASSICAL


class StrengthResponse(BaseModel):
    primitive: str
    property: Property
    model: Model
    bits: float
    verdict: str


class FinalityResponse(BaseModel):
    q: float
    z: int
    analytic: float
    empirical: Optional[float] = None
    trials: int = 0
    stderr: Optional[float] = None


class JobResponse(BaseModel):
    job_id: str
    status: JobStatus
    message: str


class JobDetail(BaseModel):
    job_id: str
    type: str
    status: JobStatus
    params: Dict[str, Any] = {}
    result: Optional[Dict[str, Any]] = None
    error: Optional[str] = None
    created_at: datetime
    updated_at: datetime
