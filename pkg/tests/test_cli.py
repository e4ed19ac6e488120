import csv
import json
import subprocess
import sys
from fractions import Fraction
from importlib import resources

import pytest

from delaycert.cli.main import main, parse_poly, run
from delaycert.cli.specfile import SpecError, bundled, loads, spec_to_dict
from delaycert.polynomial import Poly
from delaycert.sdp import read_sdpa
from delaycert.stability.certificate import Certificate
from delaycert.stability.systems import example1, hale

EX1 = str(resources.files("delaycert.data").joinpath("example1.json"))
HALE = str(resources.files("delaycert.data").joinpath("hale.json"))


def write_spec(tmp_path, doc, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_certify_bundled_example(tmp_path):
    cert = tmp_path / "c.json"
    code, out = run(["certify", "--spec", EX1, "--degree", "2", "--dump-cert", str(cert)])
    assert code == 0 and out["verdict"] == "CERTIFIED"
    assert out["gram_residual"] <= 1e-7
    assert Certificate.load(cert).kind == "linear"


def test_certify_beyond_margin_exits_one():
    code, out = run(["certify", "--spec", EX1, "--degree", "2", "--tau", "1.8"])
    assert code == 1 and out["verdict"] == "NOT CERTIFIED"


def test_nonlinear_spec_uses_file_defaults():
    code, out = run(["certify", "--spec", HALE])
    assert code == 0 and out["degree"] == 6


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"version": 1,\n  "kind": "linear-single",\n  "n": 2,,\n}')
    code, out = run(["certify", "--spec", str(path)])
    assert code == 2
    assert "line 3, column 10" in out["detail"]
    with pytest.raises(SpecError):
        loads('{"version": 1, "kind": "linear-single", "n": "two"}')


def test_schema_errors_exit_two(tmp_path):
    doc = {"version": 1, "kind": "linear-single", "n": 2, "delays": [1], "matrices": {"A0": [[0]], "A1": [[0]]}}
    code, out = run(["certify", "--spec", write_spec(tmp_path, doc)])
    assert code == 2 and "error" in out
    code, _ = run(["certify", "--spec", str(tmp_path / "missing.json")])
    assert code == 2
    code, _ = run(["certify"])
    assert code == 2


def test_spec_round_trip():
    for spec in (example1(1.0), hale("0.9")):
        back, _ = loads(json.dumps(spec_to_dict(spec)))
        assert back.digest() == spec.digest()
    spec, defaults = bundled("example1")
    assert spec.digest() == example1(1.0).digest() and defaults == {"d": 4}


def test_margin_and_sweep(tmp_path):
    code, out = run(["margin", "--spec", EX1, "--degree", "2", "--bracket", "1.5", "1.7", "--tol", "0.01",
                     "--verify-trials", "2"])
    assert code == 0
    assert out["bracket"][0] <= 1.6249 <= out["bracket"][1] + 0.01
    assert out["verification"]["passed"]
    code, out = run(["sweep", "--spec", EX1, "--degree", "2", "--grid", "1.0:0.8:1.8"])
    assert code == 0
    assert [r["verdict"] for r in out["results"]] == ["CERTIFIED", "NOT CERTIFIED"]


def test_region_command(tmp_path):
    doc = json.loads(open(EX1).read())
    doc["parameters"] = {"tau": ["0.5", "1.0"]}
    path = write_spec(tmp_path, doc)
    code, out = run(["region", "--spec", path, "--degree-theta", "2", "--degree-param", "2"])
    assert code == 0 and out["verdict"] == "CERTIFIED"
    assert out["parameters"] == {"tau": [0.5, 1.0]}


def test_simulate_writes_csv(tmp_path):
    path = tmp_path / "t.csv"
    code, out = run(["simulate", "--spec", EX1, "--history", "1, theta", "--tend", "2", "--out", str(path)])
    assert code == 0 and not out["blew_up"]
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "x1", "x2"] and len(rows) == out["steps"] + 2
    assert float(rows[1][2]) == 0.0


def test_export_sdpa(tmp_path):
    path = tmp_path / "p.dat-s"
    code, out = run(["export-sdpa", "--spec", EX1, "--degree", "2", "--out", str(path)])
    assert code == 0
    pb = read_sdpa(path)
    assert pb.n_vars > 0


def test_parse_poly():
    th = Poly.var("theta")
    assert parse_poly("1 - 2*theta**2 + theta/3") == 1 - 2 * th ** 2 + th * Fraction(1, 3)
    with pytest.raises(ValueError):
        parse_poly("sin(theta)")
    with pytest.raises(ValueError):
        parse_poly("theta +")


def test_main_prints_json(capsys):
    code = main(["certify", "--spec", EX1, "--degree", "2"])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["verdict"] == "CERTIFIED"


def test_console_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "delaycert", "certify", "--spec", EX1, "--degree", "2",
                           "--tau", "1.8"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert json.loads(proc.stdout)["verdict"] == "NOT CERTIFIED"



def test_help_prints_only_usage(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("usage: delaycert") and "{" not in out.splitlines()[-1]
    assert main(["certify", "--bogus"]) == 2
