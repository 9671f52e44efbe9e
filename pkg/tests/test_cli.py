import csv
import json
from importlib import resources
from pathlib import Path

import jsonschema
import pytest

from stvmargin import read_lp
from stvmargin.cli import STALL_ENV, main, parse_order

DATA = Path(__file__).parent / "data"
EX_A = str(DATA / "example_a.stv")
EX_B = str(DATA / "example_b.stv")
SCHEMA = json.loads(resources.files("stvmargin").joinpath("report.schema.json").read_text())


def run_json(capsys, *argv) -> dict:
    assert main([*argv, "--format", "json"]) == 0
    report = json.loads(capsys.readouterr().out)
    jsonschema.validate(report, SCHEMA)
    return report


def test_count_text(capsys):
    assert main(["count", EX_A]) == 0
    out = capsys.readouterr().out
    assert "5/6" in out and "24.00" in out


def test_count_json(capsys):
    rep = run_json(capsys, "count", EX_A)
    assert rep["quota"] == 21
    assert rep["elected"] == ["c1", "c3"]
    assert rep["order"] == [["c1", 1], ["c2", 0], ["c3", 1]]
    assert rep["rounds"][0]["transfer_value"]["exact"] == "5/6"
    assert rep["election"]["ballots"] == 60


def test_bounds_json(capsys):
    rep = run_json(capsys, "bounds", EX_A, "--order", "c3-,c1+,c2+")
    assert (rep["weub"], rep["simple"], rep["best"]) == (2, 6, 2)
    assert rep["certified"]["size"] == 2
    assert rep["prefix"]["components"] == [5, 0, 11]
    assert rep["prefix"]["lb"] == 11


def test_margin_json(capsys, tmp_path):
    path = tmp_path / "r.json"
    rep = run_json(capsys, "margin", EX_A, "--report", str(path))
    assert rep["mov"] == 2 and rep["exact"]
    assert rep["lower_bound"] == rep["upper_bound"] == 2
    jsonschema.validate(json.loads(path.read_text()), SCHEMA)


def test_margin_text_relaxed(capsys):
    assert main(["margin", EX_B, "--mode", "piecewise", "--K", "3", "--rule-lb", "off"]) == 0
    assert "5" in capsys.readouterr().out


def test_oracle(capsys):
    rep = run_json(capsys, "oracle", EX_A, "--kmax", "2")
    assert rep["value"] == 2 and not rep["exceeds"]
    rep = run_json(capsys, "oracle", EX_A, "--kmax", "1", "--order", "c3+")
    assert rep["value"] is None and rep["exceeds"]


def test_export_model(capsys, tmp_path):
    lp = tmp_path / "m.lp"
    rep = run_json(capsys, "export-model", EX_A, "--order", "c1+,c4+", "--lp", str(lp))
    assert rep["bilinear"] > 0 and not rep["relaxed"]
    model = read_lp(lp.read_text())
    assert model.num_vars == rep["variables"]
    assert main(["export-model", EX_A, "--order", "c1:1,c2:0", "--mode", "mccormick"]) == 0
    assert read_lp(capsys.readouterr().out).num_vars > 0


def test_batch(capsys, tmp_path):
    folder = tmp_path / "in"
    folder.mkdir()
    for src in (EX_A, EX_B):
        (folder / Path(src).name).write_text(Path(src).read_text())
    out = tmp_path / "out"
    rep = run_json(capsys, "batch", str(folder), "--out-dir", str(out))
    assert len(rep["elections"]) == 2
    with open(out / "summary.csv") as fh:
        rows = {r["election"]: r for r in csv.DictReader(fh)}
    assert rows["example_a.stv"]["upper"] == "2" and rows["example_b.stv"]["upper"] == "5"
    jsonschema.validate(json.loads((out / "example_a.json").read_text()), SCHEMA)


def test_parse_order(example_a):
    assert parse_order("c1+,c2-", example_a).steps == ((0, 1), (1, 0))
    assert parse_order("c1:1, c2:0", example_a).steps == ((0, 1), (1, 0))
    assert parse_order("1+,4+", example_a).steps == ((0, 1), (3, 1))


@pytest.mark.parametrize("argv,code", [
    (["margin", EX_A, "--K", "3"], 2),
    (["count", "/nonexistent.stv"], 3),
    (["oracle", EX_A, "--kmax", "5"], 5),
    (["bounds", EX_A, "--order", "c9+"], 4),
    (["count", EX_A, "--seats", "4"], 3),
    (["margin", EX_A, "--solver", "external:/nonexistent/solver"], 6),
])
def test_exit_codes(argv, code, capsys):
    assert main(argv) == code
    assert capsys.readouterr().err


def test_argparse_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["margin"])
    assert info.value.code == 2


def test_stall_env(monkeypatch, capsys):
    monkeypatch.setenv(STALL_ENV, "nope")
    assert main(["margin", EX_A]) == 2
    monkeypatch.setenv(STALL_ENV, "30")
    rep = run_json(capsys, "margin", EX_A)
    assert rep["search"]["stall_limit"] == 30


def test_bad_file(tmp_path, capsys):
    bad = tmp_path / "bad.stv"
    bad.write_text("seats: 1\ncandidates: a, b\n3: a, q\n")
    assert main(["count", str(bad)]) == 3
    assert "line 3" in capsys.readouterr().err
