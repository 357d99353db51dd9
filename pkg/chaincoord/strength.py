"""Security-strength arithmetic for digests and signature schemes under classical and quantum models."""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple, Union

import pandas as pd

from chaincoord.errors import DomainError, UnsupportedCombination

logger = logging.getLogger(__name__)


class Property(str, Enum):
    PREIMAGE = "preimage"
    SECOND_PREIMAGE = "second-preimage"
    COLLISION = "collision"
    KEY_RECOVERY = "key-recovery"


class Model(str, Enum):
    CLASSICAL = "classical"
    QUANTUM_GROVER = "quantum-grover"
    QUANTUM_COLLISION_BOUND = "quantum-collision-bound"
    QUANTUM_SHOR = "quantum-shor"


class Verdict(str, Enum):
    ACCEPTABLE = "Acceptable"
    PHASE_OUT_BY_2030 = "PhaseOutBy2030"
    DISALLOWED = "Disallowed"


@dataclass(frozen=True)
class Digest:
    output_bits: int
    truncated_to_bits: Optional[int] = None
    name: str = ""

    def __post_init__(self):
        if self.output_bits <= 0:
            raise DomainError("output_bits must be positive")
        if self.truncated_to_bits is not None and not 0 < self.truncated_to_bits <= self.output_bits:
            raise DomainError("truncated_to_bits must lie in (0, output_bits]")

    @property
    def effective_bits(self) -> int:
        return self.truncated_to_bits or self.output_bits

    @property
    def label(self) -> str:
        return self.name or f"digest {self.output_bits}/{self.effective_bits}"


# scheme -> (classical, quantum) key-recovery strength; Shor breaks elliptic curves outright
SIGNATURE_STRENGTHS = {
    "ECDSA-secp256k1": (128.0, 0.0),
    "BLS12-381": (128.0, 0.0),
}


@dataclass(frozen=True)
class Signature:
    scheme: str

    def __post_init__(self):
        if self.scheme not in SIGNATURE_STRENGTHS:
            raise UnsupportedCombination(f"unknown signature scheme '{self.scheme}'")

    @property
    def label(self) -> str:
        return self.scheme


Primitive = Union[Digest, Signature]


@dataclass(frozen=True)
class StrengthQuery:
    primitive: Primitive
    property: Property
    model: Model = Model.CLASSICAL


def strength_bits(query: StrengthQuery) -> float:
    primitive, prop, model = query.primitive, Property(query.property), Model(query.model)
    if isinstance(primitive, Signature):
        if prop is not Property.KEY_RECOVERY:
            raise UnsupportedCombination(f"{primitive.scheme} only supports key recovery")
        classical, quantum = SIGNATURE_STRENGTHS[primitive.scheme]
        if model is Model.CLASSICAL:
            return classical
        if model is not Model.QUANTUM_SHOR:
            raise UnsupportedCombination(f"{model.value} does not apply to signature key recovery")
        return quantum

    bits = float(primitive.effective_bits)
    if prop is Property.KEY_RECOVERY:
        raise UnsupportedCombination("digests have no key-recovery property")
    if model is Model.QUANTUM_SHOR:
        raise UnsupportedCombination("Shor's algorithm does not apply to digests")
    if model is Model.CLASSICAL:
        return bits / 2 if prop is Property.COLLISION else bits
    if model is Model.QUANTUM_GROVER:
        if prop is Property.COLLISION:
            raise UnsupportedCombination("use the collision-bound model for quantum collisions")
        return bits / 2
    if prop is not Property.COLLISION:
        raise UnsupportedCombination("the collision-bound model only covers collisions")
    return bits / 3


def phaseout_check(bits: float) -> Verdict:
    if bits < 0:
        raise DomainError("bits must be non-negative")
    if bits < 112:
        return Verdict.DISALLOWED
    if bits < 128:
        return Verdict.PHASE_OUT_BY_2030
    return Verdict.ACCEPTABLE


DEFAULT_PRIMITIVES: Tuple[Primitive, ...] = (
    Digest(256, 256, name="Keccak-256"),
    Digest(256, 160, name="account id (Keccak-256 truncated)"),
    Signature("ECDSA-secp256k1"),
)

_DIGEST_ROWS = (
    (Property.PREIMAGE, Model.CLASSICAL),
    (Property.SECOND_PREIMAGE, Model.CLASSICAL),
    (Property.COLLISION, Model.CLASSICAL),
    (Property.PREIMAGE, Model.QUANTUM_GROVER),
    (Property.SECOND_PREIMAGE, Model.QUANTUM_GROVER),
    (Property.COLLISION, Model.QUANTUM_COLLISION_BOUND),
)
_SIGNATURE_ROWS = (
    (Property.KEY_RECOVERY, Model.CLASSICAL),
    (Property.KEY_RECOVERY, Model.QUANTUM_SHOR),
)


def strength_table(primitives: Iterable[Primitive] = DEFAULT_PRIMITIVES) -> pd.DataFrame:
    rows = []
    for primitive in primitives:
        combos: Sequence = _SIGNATURE_ROWS if isinstance(primitive, Signature) else _DIGEST_ROWS
        for prop, model in combos:
            bits = strength_bits(StrengthQuery(primitive, prop, model))
            rows.append({
                "primitive": primitive.label,
                "property": prop.value,
                "model": model.value,
                "bits": round(bits, 1),
                "verdict": phaseout_check(bits).value,
            })
    return pd.DataFrame(rows, columns=["primitive", "property", "model", "bits", "verdict"])
