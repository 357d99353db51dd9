"""
Scenario files.

The format is line oriented:

    # comments and blank lines are ignored
    [run]
    name = quiet-default
    seed = 7
    duration = 86400

    [sidechain]
    id = alpha
    participants = 3
    strategy = direct

    [crosschain]
    id = swap-1
    legs = alpha, beta

`[run]`, `[coordination]` and `[prices]` appear at most once. `[intermediate]`, `[sidechain]`,
`[adversary]` and `[crosschain]` may repeat; each header opens a new entry. Values are plain
text, lists are comma separated. Every value is validated by the pydantic section models in
`chaincoord.models`; all violations are reported together.
"""

import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

from pydantic import ValidationError as PydanticValidationError

from chaincoord.errors import ParseError, ValidationError
from chaincoord.models import (
    AdversaryKind,
    AdversarySection,
    CoordinationSection,
    CrosschainSection,
    IntermediateSection,
    PinStrategy,
    PricesSection,
    RunSection,
    ScenarioConfig,
    SidechainSection,
)

logger = logging.getLogger(__name__)

SINGLE_SECTIONS = {
    "run": RunSection,
    "coordination": CoordinationSection,
    "prices": PricesSection,
}
REPEATED_SECTIONS = {
    "intermediate": ("intermediates", IntermediateSection),
    "sidechain": ("sidechains", SidechainSection),
    "adversary": ("adversaries", AdversarySection),
    "crosschain": ("crosschain", CrosschainSection),
}
LIST_FIELDS = {"legs"}

RawSection = Tuple[str, int, Dict[str, str]]


def _split_sections(text: str) -> List[RawSection]:
    sections: List[RawSection] = []
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError("unterminated section header", number)
            name = line[1:-1].strip().lower()
            if name not in SINGLE_SECTIONS and name not in REPEATED_SECTIONS:
                raise ParseError(f"unknown section [{name}]", number)
            if name in SINGLE_SECTIONS and any(s[0] == name for s in sections):
                raise ParseError(f"section [{name}] may appear only once", number)
            current = (name, number, {})
            sections.append(current)
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("empty key", number)
        if current is None:
            raise ParseError("key outside of a section", number, key)
        if key in current[2]:
            raise ParseError("duplicate key", number, key)
        current[2][key] = value
    return sections


def _coerce(fields: Dict[str, str]) -> Dict[str, object]:
    values: Dict[str, object] = {}
    for key, value in fields.items():
        if key in LIST_FIELDS:
            values[key] = [item.strip() for item in value.split(",") if item.strip()]
        else:
            values[key] = value
    return values


def _violations(label: str, error: PydanticValidationError) -> List[str]:
    out = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"])
        out.append(f"{label}{'.' + location if location else ''}: {item['msg']}")
    return out


def parse_scenario(text: str, name: str = "scenario") -> ScenarioConfig:
    """Parse and validate scenario text, applying defaults"""
    violations: List[str] = []
    values: Dict[str, object] = {"name": name}
    counters: Dict[str, int] = {}

    for section, line, fields in _split_sections(text):
        fields = _coerce(fields)
        if section == "run" and "name" in fields:
            values["name"] = fields.pop("name")
        if section in SINGLE_SECTIONS:
            label, model = section, SINGLE_SECTIONS[section]
        else:
            index = counters.get(section, 0)
            counters[section] = index + 1
            label, model = f"{section}[{index}] (line {line})", REPEATED_SECTIONS[section][1]
        try:
            parsed = model.model_validate(fields)
        except PydanticValidationError as e:
            violations.extend(_violations(label, e))
            continue
        if section in SINGLE_SECTIONS:
            values[section] = parsed
        else:
            values.setdefault(REPEATED_SECTIONS[section][0], []).append(parsed)

    values["sidechains"], cross = _resolve_references(values)
    violations.extend(cross)
    if violations:
        raise ValidationError(violations)
    config = ScenarioConfig.model_validate(values)
    logger.info(
        f"Scenario '{config.name}': {len(config.sidechains)} sidechain(s), "
        f"{len(config.intermediates)} intermediate chain(s), {len(config.crosschain)} crosschain tx(s)"
    )
    return config


def _resolve_references(values: Dict[str, object]) -> Tuple[List[SidechainSection], List[str]]:
    intermediates: List[IntermediateSection] = values.get("intermediates", [])
    sidechains: List[SidechainSection] = values.get("sidechains", [])
    adversaries = values.get("adversaries", [])
    crosschain: List[CrosschainSection] = values.get("crosschain", [])
    violations: List[str] = []

    inter_ids = [i.id for i in intermediates]
    side_ids = [s.id for s in sidechains]
    for kind, ids in (("intermediate", inter_ids), ("sidechain", side_ids), ("crosschain", [c.id for c in crosschain])):
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        violations.extend(f"{kind} id '{i}' is declared more than once" for i in duplicates)
    for clash in sorted(set(inter_ids) & set(side_ids)):
        violations.append(f"id '{clash}' names both an intermediate chain and a sidechain")

    resolved = []
    for sidechain in sidechains:
        if sidechain.strategy is PinStrategy.HIERARCHICAL:
            if sidechain.via is None and len(inter_ids) == 1:
                sidechain = sidechain.model_copy(update={"via": inter_ids[0]})
            if sidechain.via is None:
                violations.append(f"sidechain '{sidechain.id}': hierarchical pinning needs 'via'")
            elif sidechain.via not in inter_ids:
                violations.append(f"sidechain '{sidechain.id}': unknown intermediate chain '{sidechain.via}'")
        elif sidechain.via is not None:
            violations.append(f"sidechain '{sidechain.id}': 'via' only applies to hierarchical pinning")
        resolved.append(sidechain)

    direct = {s.id for s in resolved if s.strategy is PinStrategy.DIRECT}
    for tx in crosschain:
        for leg in tx.legs:
            if leg not in side_ids:
                violations.append(f"crosschain '{tx.id}': unknown sidechain '{leg}'")
            elif leg not in direct:
                violations.append(f"crosschain '{tx.id}': leg '{leg}' has no keyset on the coordination chain (pinned hierarchically)")
        if len(set(tx.legs)) != len(tx.legs):
            violations.append(f"crosschain '{tx.id}': legs must be distinct sidechains")
        if tx.faulty_leg >= len(tx.legs):
            violations.append(f"crosschain '{tx.id}': faulty_leg {tx.faulty_leg} is not a leg index")

    if len([a for a in adversaries if a.kind is AdversaryKind.PRIVATE_MINER]) > 1:
        violations.append("at most one private-miner adversary is supported")
    return resolved, violations


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read scenario file {path}: {e.strerror or e}") from e
    except UnicodeDecodeError as e:
        raise ParseError(f"scenario file {path} is not UTF-8 text (byte {e.start})") from e
    return parse_scenario(text, name=path.stem)
