"""
Probabilistic finality: the attacker catch-up formula, a seeded Monte Carlo race used as
its oracle, confirmation policies and the finality predicate over a ChainView.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import poisson

from chaincoord.chain import ChainView, FinalityMode, confirmations
from chaincoord.errors import DomainError

logger = logging.getLogger(__name__)

# Named confirmation counts; these are configuration presets, not computed values
CONFIRMATION_PRESETS = {
    "nakamoto-6": 6,
    "ethereum-scaled": 8,
    "buterin-low": 6,
    "buterin-high": 12,
    "gervais-2016": 37,
}

MAX_CONFIRMATION_SCAN = 10_000


class FinalityPolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    confirmations_required: int = Field(default=12, ge=1)
    block_time_target: float = Field(default=14.0, gt=0.0)

    @classmethod
    def preset(cls, name: str, block_time_target: float = 14.0) -> "FinalityPolicy":
        if name not in CONFIRMATION_PRESETS:
            raise DomainError(f"unknown confirmation preset '{name}'")
        return cls(confirmations_required=CONFIRMATION_PRESETS[name], block_time_target=block_time_target)


class AttackerModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    q: float = Field(ge=0.0, lt=1.0)
    strategy: Literal["private-chain-race"] = "private-chain-race"

    @property
    def certain_success(self) -> bool:
        return self.q >= 0.5


@dataclass(frozen=True)
class ReversionEstimate:
    probability: float
    successes: int
    trials: int
    stderr: float


def _check_q(q: float):
    if not 0.0 <= q < 1.0:
        raise DomainError(f"attacker fraction q={q} outside [0, 1)")


def catchup_probability(q: float, z: int) -> float:
    """Probability that an attacker with hashpower fraction q ever overtakes a z-deep chain"""
    _check_q(q)
    if z < 0:
        raise DomainError("z must be non-negative")
    if q >= 0.5 or z == 0:
        return 1.0
    p = 1.0 - q
    lam = z * q / p
    k = np.arange(0, z + 1)
    terms = poisson.pmf(k, lam) * (1.0 - (q / p) ** (z - k))
    return float(min(1.0, max(0.0, 1.0 - terms.sum())))


def required_confirmations(q: float, target_risk: float) -> int:
    if not 0.0 < target_risk < 1.0:
        raise DomainError("target_risk must lie in (0, 1)")
    _check_q(q)
    if q >= 0.5:
        raise DomainError("no confirmation count protects against q >= 0.5")
    for z in range(1, MAX_CONFIRMATION_SCAN + 1):
        if catchup_probability(q, z) <= target_risk:
            return z
    raise DomainError(f"risk {target_risk} not reached within {MAX_CONFIRMATION_SCAN} confirmations")


def finality_time(policy: FinalityPolicy) -> float:
    return policy.confirmations_required * policy.block_time_target


def truncation_bias_bound(q: float, max_deficit: int) -> float:
    """Upper bound on the success probability lost by abandoning races at max_deficit"""
    _check_q(q)
    if q >= 0.5:
        return 1.0
    return (q / (1.0 - q)) ** max_deficit


def _race(q: float, z: int, trials: int, seed_seq: np.random.SeedSequence, max_deficit: int) -> int:
    rng = np.random.default_rng(seed_seq)
    p = 1.0 - q
    head_start = rng.poisson(z * q / p, size=trials)
    deficit = z - head_start
    success = deficit <= 0
    alive = np.flatnonzero(~success & (deficit < max_deficit))
    remaining = deficit[alive]
    while alive.size:
        remaining = remaining + np.where(rng.random(alive.size) < q, -1, 1)
        caught = remaining <= 0
        success[alive[caught]] = True
        keep = ~caught & (remaining < max_deficit)
        alive = alive[keep]
        remaining = remaining[keep]
    return int(success.sum())


def monte_carlo_reversion(
    q: float,
    z: int,
    trials: int,
    seed: int,
    max_deficit: int = 50,
    partitions: int = 8,
    workers: int = 1,
) -> ReversionEstimate:
    """Empirical catch-up rate: Poisson head start, then a +/-1 race truncated at max_deficit.

    Trials are split over `partitions` independent seed sub-streams, so the result depends on
    (seed, partitions) only and never on `workers`.
    """
    _check_q(q)
    if trials < 1:
        raise DomainError("trials must be at least 1")
    if max_deficit < 20:
        raise DomainError("max_deficit must be at least 20")
    if z < 0:
        raise DomainError("z must be non-negative")
    partitions = max(1, min(partitions, trials))
    sizes = [trials // partitions + (1 if i < trials % partitions else 0) for i in range(partitions)]
    streams = np.random.SeedSequence(seed).spawn(partitions)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(lambda args: _race(q, z, args[0], args[1], max_deficit), zip(sizes, streams)))
    else:
        counts = [_race(q, z, size, stream, max_deficit) for size, stream in zip(sizes, streams)]

    successes = sum(counts)
    probability = successes / trials
    stderr = math.sqrt(probability * (1.0 - probability) / trials)
    return ReversionEstimate(probability, successes, trials, stderr)


def is_final(
    chain: ChainView,
    block_hash: bytes,
    policy: FinalityPolicy,
    mode: Optional[FinalityMode] = None,
) -> bool:
    mode = mode or chain.mode
    if mode is FinalityMode.INSTANT:
        return chain.is_canonical(block_hash)
    return confirmations(chain, block_hash) >= policy.confirmations_required


def block_interval(rng: np.random.Generator, mean: float, stochastic: bool) -> int:
    """Whole seconds until the next block"""
    if not stochastic:
        return max(1, int(round(mean)))
    return max(1, int(round(rng.exponential(mean))))


def finality_table(
    qs: Iterable[float],
    zs: Iterable[int],
    trials: int = 100_000,
    seed: int = 0,
    max_deficit: int = 50,
    partitions: int = 8,
    workers: int = 1,
) -> pd.DataFrame:
    rows: List[dict] = []
    for q in qs:
        for z in zs:
            estimate = monte_carlo_reversion(q, z, trials, seed, max_deficit, partitions, workers)
            rows.append({
                "q": q,
                "z": z,
                "analytic_p": catchup_probability(q, z),
                "empirical_p": estimate.probability,
                "trials": trials,
                "stderr": estimate.stderr,
            })
    logger.info(f"Finality table: {len(rows)} rows at {trials} trials each")
    return pd.DataFrame(rows, columns=["q", "z", "analytic_p", "empirical_p", "trials", "stderr"])
