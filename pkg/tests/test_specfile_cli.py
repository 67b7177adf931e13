import csv
import io
import json
import subprocess
import sys
from fractions import Fraction

import pytest

from oracles import SPECS
from toricdeg.cli import main
from toricdeg.specfile import SpecFileError, dumps, load, loads

CORPUS = sorted(SPECS.glob("*.json"))


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# ---------------------------------------------------------------------------
# spec files


@pytest.mark.parametrize("path", CORPUS, ids=lambda p: p.stem)
def test_corpus_round_trip(path):
    sf = load(path)
    text = dumps(sf)
    again = loads(text)
    assert again == sf
    assert dumps(again) == text


def test_rationals_stay_exact():
    sf = loads('{"rank": 1, "rays": [[1], [-1]], "weights": ["1/3", "2/6"]}')
    assert sf.weights == [Fraction(1, 3), Fraction(1, 3)]
    assert json.loads(dumps(sf))["weights"] == ["1/3", "1/3"]


@pytest.mark.parametrize("text,line,fragment", [
    ('{\n  "rank": 1,\n  "rays": [[1], [-1]],\n  "weights": ["0", "x"]\n}', 4, "rational"),
    ('{\n  "rank": 1,\n  "rays": [[1], [-1]\n  "weights": ["0", "1"]\n}', 4, ""),
    ('{\n  "rank": 2,\n  "rays": [[1], [-1]],\n  "weights": ["0", "1"]\n}', 3, "rank"),
    ('{\n  "rank": 1,\n  "rays": [[1], [-1]],\n  "weights": ["0", "1"],\n  "rho": "bumpy"\n}', 5, "rho"),
    ('{\n  "rank": 1,\n  "rays": [[1], [-1]],\n  "weights": ["0"]\n}', 4, "length"),
])
def test_malformed_specs_name_the_line(text, line, fragment):
    with pytest.raises(SpecFileError) as info:
        loads(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)
    assert fragment in str(info.value)


# ---------------------------------------------------------------------------
# subcommands


def test_check_on_product_example(capsys):
    code, out, _ = run(capsys, "check", "--spec", SPECS / "product.json")
    assert code == 0
    doc = json.loads(out)
    assert doc["report_version"] == 1 and doc["subcommand"] == "check"
    res = doc["result"]
    assert res["simple"] is True and res["d"] == 1 and res["simplicial"] is True
    assert all(r["multiplicity"] == 1 for r in res["multiplicities"])


def test_check_on_nonconvex(capsys):
    code, out, _ = run(capsys, "check", "--spec", SPECS / "nonconvex.json")
    res = json.loads(out)["result"]
    assert code == 0 and res["convex"] is False and res["dropped_rays"] == [[1, 1]]


def test_reduce_drops_raised_ray(capsys, tmp_path):
    code, out, _ = run(capsys, "reduce", "--spec", SPECS / "incomplete_hull.json")
    assert code == 0
    reduced = loads(out)
    assert reduced.rays == [(1, 0), (0, 1)]
    code, out, _ = run(capsys, "reduce", "--spec", SPECS / "nonconvex.json", "--out", tmp_path)
    assert code == 0 and out == ""
    assert len(load(tmp_path / "reduce.json").rays) == 3


def test_strata_and_lambda(capsys):
    code, out, _ = run(capsys, "strata", "--spec", SPECS / "sheared.json")
    assert code == 0 and json.loads(out)["result"]["census"] == {"0": 1, "1": 4, "2": 4}
    code, out, _ = run(capsys, "lambda", "--spec", SPECS / "sheared.json")
    res = json.loads(out)["result"]
    assert code == 0 and res["lambda2"] == "2" and res["lambda1"] == "1/4"


def test_metric_sample_csv(capsys):
    code, out, _ = run(capsys, "metric-sample", "--spec", SPECS / "rank1.json", "--samples", 3,
                       "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 2 * 5 * 3
    assert {"chart", "tau", "a1", "min_eig", "max_eig", "phi", "flags"} <= set(rows[0])
    assert all(float(r["min_eig"]) >= 1 - 1e-12 and r["flags"] == "" for r in rows)


def test_metric_sample_glued_flags_positivity(capsys):
    code, out, _ = run(capsys, "metric-sample", "--spec", SPECS / "sheared.json", "--samples", 5,
                       "--mode", "glued")
    res = json.loads(out)["result"]
    assert code == 2 and res["violations"] > 0
    assert any(r["flags"] == "positivity" for r in res["samples"])


def test_volume_report(capsys):
    code, out, _ = run(capsys, "volume", "--spec", SPECS / "rank1.json")
    res = json.loads(out)["result"]
    assert code == 0
    last = [r for r in res["volumes"] if r["tau"] == repr(1e7)]
    assert all(float(r["volume_eta_n"]) == pytest.approx(2.0, rel=1e-5) for r in last)


def test_wp_decay_rank1(capsys):
    code, out, _ = run(capsys, "wp-decay", "--spec", SPECS / "rank1.json")
    fits = json.loads(out)["result"]["fits"]
    assert code == 0 and len(fits) == 2
    for f in fits:
        assert -3.1 <= float(f["exponent"]) <= -2.9
        assert float(f["C"]) == pytest.approx(280 / 3, rel=1e-9)
        assert float(f["C_lower"]) > 0


def test_atlas_validate(capsys, tmp_path):
    code, out, _ = run(capsys, "atlas-validate", "--spec", SPECS / "atlas_chain.json")
    res = json.loads(out)["result"]
    assert code == 0 and res["valid"] and res["min_extension"] == 2
    doc = json.loads((SPECS / "atlas_chain.json").read_text())
    doc["atlas"]["incidences"][2]["map"] = [[[1], [-1]], [[-1], [1]]]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc, indent=2))
    code, out, _ = run(capsys, "atlas-validate", "--spec", bad)
    assert code == 2 and json.loads(out)["result"]["violations"]
    code, _, err = run(capsys, "atlas-validate", "--spec", SPECS / "rank1.json")
    assert code == 2 and "no atlas" in err


# ---------------------------------------------------------------------------
# exit codes and determinism


def test_exit_codes(capsys, tmp_path):
    code, _, err = run(capsys, "frobnicate", "--spec", SPECS / "rank1.json")
    assert code == 64 and "usage" in err
    code, _, _ = run(capsys, "check", "--spec", SPECS / "rank1.json", "--mode", "fuzzy")
    assert code == 64
    code, _, err = run(capsys, "check", "--spec", tmp_path / "missing.json")
    assert code == 1 and "cannot read" in err
    broken = tmp_path / "broken.json"
    broken.write_text('{\n  "rank": 1,\n  "rays": [[1], [-1]],,\n}')
    code, _, err = run(capsys, "check", "--spec", broken)
    assert code == 1 and "line 3" in err
    incomplete = tmp_path / "incomplete.json"
    incomplete.write_text('{"rank": 2, "rays": [[1, 0], [0, 1]], "weights": ["0", "0"]}')
    code, _, err = run(capsys, "check", "--spec", incomplete)
    assert code == 2 and "not complete" in err


@pytest.mark.parametrize("argv", [
    ["check", "--spec", SPECS / "sheared.json"],
    ["metric-sample", "--spec", SPECS / "product.json", "--samples", 4, "--format", "csv"],
    ["volume", "--spec", SPECS / "product.json"],
])
def test_reports_are_byte_identical(argv, tmp_path):
    texts = []
    for k in range(2):
        out = tmp_path / str(k)
        assert main([str(a) for a in argv] + ["--out", str(out)]) == 0
        (path,) = list(out.iterdir())
        texts.append(path.read_bytes())
    assert texts[0] == texts[1]


def test_seed_changes_samples(capsys):
    outs = [run(capsys, "metric-sample", "--spec", SPECS / "rank1.json", "--samples", 2,
                "--seed", seed)[1] for seed in (1, 2)]
    assert outs[0] != outs[1]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "toricdeg", "lambda", "--spec", str(SPECS / "rank1.json")],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["result"]["lambda2"] == "1"
    assert "lambda:" in proc.stderr
