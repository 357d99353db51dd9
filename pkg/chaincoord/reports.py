"""Rendering of run reports, comparison rows and calculator tables as table, json or csv text."""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import pandas as pd
from pydantic import BaseModel

from chaincoord.models import ComparisonRow, RunReport

logger = logging.getLogger(__name__)


class ReportFormat(str, Enum):
    TABLE = "table"
    JSON = "json"
    CSV = "csv"


Renderable = Union[RunReport, Sequence[BaseModel], pd.DataFrame]


def _frame(rows: Sequence[BaseModel]) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump(mode="json") for row in rows])


def report_frames(report: RunReport) -> Dict[str, pd.DataFrame]:
    """One DataFrame per report section"""
    frames = {
        "root": _frame([report.root]),
        "sidechains": _frame(report.sidechains),
        "spend": _frame(report.spend),
        "crosschain": _frame([report.crosschain]),
    }
    if report.reversion:
        frames["reversion"] = _frame(report.reversion)
    return frames


def comparison_frame(rows: Sequence[ComparisonRow]) -> pd.DataFrame:
    return _frame(rows)


def _sections(frames: Dict[str, pd.DataFrame], fmt: ReportFormat) -> str:
    parts = []
    for name, frame in frames.items():
        if fmt is ReportFormat.CSV:
            parts.append(f"# {name}\n{frame.to_csv(index=False)}")
        else:
            body = frame.to_string(index=False) if not frame.empty else "(none)"
            parts.append(f"== {name} ==\n{body}\n")
    return "\n".join(parts)


def render(obj: Renderable, fmt: Union[ReportFormat, str] = ReportFormat.TABLE) -> str:
    fmt = ReportFormat(fmt)
    if isinstance(obj, RunReport):
        if fmt is ReportFormat.JSON:
            return obj.model_dump_json(indent=2) + "\n"
        header = f"scenario {obj.scenario} | seed {obj.seed} | {obj.duration}s\n"
        return (header if fmt is ReportFormat.TABLE else "") + _sections(report_frames(obj), fmt)

    if isinstance(obj, pd.DataFrame):
        frame = obj
    else:
        if fmt is ReportFormat.JSON:
            return json.dumps([row.model_dump(mode="json") for row in obj], indent=2) + "\n"
        frame = _frame(obj)

    if fmt is ReportFormat.JSON:
        return frame.to_json(orient="records", indent=2) + "\n"
    if fmt is ReportFormat.CSV:
        return frame.to_csv(index=False)
    return frame.to_string(index=False) + "\n"


def emit(text: str, out: Optional[Union[str, Path]] = None) -> None:
    """Write rendered text to `out`, or to standard output"""
    if out is None:
        print(text, end="")
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Report written to {path}")
