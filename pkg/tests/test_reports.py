import json

import pytest

from chaincoord.gas import cost_table
from chaincoord.reports import ReportFormat, emit, render, report_frames
from chaincoord.scenario import parse_scenario
from chaincoord.simulator import run

TINY = "[run]\nname = tiny\nduration = 900\n[sidechain]\nid = a\npin_interval = 300\n"


@pytest.fixture(scope="module")
def report():
    return run(parse_scenario(TINY))


def test_frames(report):
    frames = report_frames(report)
    assert list(frames) == ["root", "sidechains", "spend", "crosschain"]
    assert frames["sidechains"]["sidechain"].tolist() == ["a"]


def test_table(report):
    text = render(report)
    assert text.startswith("scenario tiny | seed 0 | 900s\n")
    assert "== sidechains ==" in text


def test_json(report):
    data = json.loads(render(report, "json"))
    assert data["scenario"] == "tiny"
    assert data["sidechains"][0]["strategy"] == "direct"


def test_csv(report):
    text = render(report, ReportFormat.CSV)
    assert "# root\n" in text and "# spend\n" in text
    assert "== " not in text


def test_frame_formats():
    frame = cost_table()
    assert render(frame, "csv").splitlines()[0] == "strategy,pin_interval,sidechains,mainnet_gas_year,usd_year"
    assert len(json.loads(render(frame, "json"))) == 6


def test_unknown_format(report):
    with pytest.raises(ValueError):
        render(report, "xml")


def test_emit(tmp_path, capsys):
    target = tmp_path / "nested" / "out.txt"
    emit("hello\n", target)
    assert target.read_text() == "hello\n"
    emit("to stdout\n")
    assert capsys.readouterr().out == "to stdout\n"
