import io
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from delaykit.cli import dump, fmt, load, main, parse_system_file, serialize_system_file

from conftest import SYSTEMS

NAMES = sorted(p.stem for p in SYSTEMS.glob("*.json"))


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


def csv_rows(text):
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return lines[0].split(","), [list(map(float, ln.split(","))) for ln in lines[1:]]


def keyvals(text):
    return dict(ln.split("=", 1) for ln in text.splitlines() if "=" in ln and not ln.startswith("#"))


@pytest.mark.parametrize("name", NAMES)
def test_shipped_files_roundtrip(name):
    path = SYSTEMS / f"{name}.json"
    doc = json.loads(path.read_text())
    assert serialize_system_file(parse_system_file(doc)) == doc
    assert dump(load(str(path))) == path.read_text().rstrip("\n")


@given(st.floats(allow_nan=False, allow_infinity=False, width=64))
def test_fmt_roundtrips_to_15_digits(x):
    y = float(fmt(x))
    assert y == float(f"{x:.15g}")


def test_fmt_special_tokens():
    assert (fmt(-math.inf), fmt(math.inf), fmt(math.nan)) == ("-inf", "inf", "nan")


def test_roots_rdde1():
    code, text = run("roots", SYSTEMS / "rdde1.json", "--half-plane", -1.5)
    assert code == 0
    header, rows = csv_rows(text)
    assert header == ["re", "im", "residual"]
    re = np.array([r[0] for r in rows])
    assert (re >= 0).sum() == 3 and abs(re.max() - 0.6176) <= 1e-3
    assert all(r[2] <= 1e-8 for r in rows)
    assert "# N=" in text


def test_roots_neutral_chains():
    code, text = run("roots", SYSTEMS / "neutral1.json", "--rect", -3, 1, -60, 60)
    assert code == 0
    re = np.array([r[0] for r in csv_rows(text)[1]])
    for target in (math.log(1.5), math.log(0.5)):
        assert (np.abs(re - target) <= 0.05).sum() >= 10


def test_roots_empty_region():
    code, text = run("roots", SYSTEMS / "rdde1.json", "--half-plane", 5)
    assert code == 0
    header, rows = csv_rows(text)
    assert header == ["re", "im", "residual"] and rows == []


def test_scalar_commands():
    assert keyvals(run("sa", SYSTEMS / "rdde1.json", "--half-plane", -1.5)[1])["sa"].startswith("0.6176")
    assert keyvals(run("cd", SYSTEMS / "heating.json")[1]) == {"cd": "-inf"}
    assert float(keyvals(run("gamma_r", SYSTEMS / "neutral2.json", "--r", 0)[1])["gamma"]) == pytest.approx(1.25, abs=1e-4)
    kv = keyvals(run("hinfnorm", SYSTEMS / "hinf_ex1.json")[1])
    assert abs(float(kv["hinf"]) - 1.5388) <= 1e-3 and abs(float(kv["wpeak"]) - 3.5571) <= 1e-2
    kv = keyvals(run("hinfnorm", SYSTEMS / "hinf_ex2.json")[1])
    assert abs(float(kv["hinf"]) - 4) <= 1e-6 and kv["wpeak"] == "inf"


def test_sigma_csv():
    code, text = run("sigma", SYSTEMS / "hinf_ex1.json", "--omega", 0, 4, 3)
    header, rows = csv_rows(text)
    assert code == 0 and header == ["omega", "sigma1"]
    assert [r[0] for r in rows] == [0, 2, 4]
    assert rows[0][1] == pytest.approx(14 / 30, abs=1e-14)


def test_tzeros():
    code, text = run("tzeros", SYSTEMS / "tzeros_siso.json", "--rect", -2, 1, -20, 20)
    _, rows = csv_rows(text)
    assert code == 0
    assert min(abs(complex(r[0], r[1]) + 0.567143290409784) for r in rows) <= 1e-6


def test_stabopt_output_is_a_controller_block():
    code, text = run("stabopt", SYSTEMS / "fragility.json", "--nstart", 1, "--method", "barrier")
    assert code == 0
    doc = json.loads(text)
    assert abs(doc["controller"]["Dc"][0][0]) < 1
    assert float(doc["log"]["strong_sa"]) < 0


def test_closeloop_file_parses():
    code, text = run("closeloop", SYSTEMS / "hiopt_ddae.json")
    assert code == 0
    sf = parse_system_file(json.loads(text))
    assert sf.system.kind.value == "ddae" and sf.controller is None


def test_deterministic_output():
    argv = ("stabopt", SYSTEMS / "fragility.json", "--nstart", 2, "--seed", 3)
    assert run(*argv) == run(*argv)
    argv = ("roots", SYSTEMS / "neutral2.json", "--half-plane", -1)
    assert run(*argv) == run(*argv)


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("sa", bad, "--half-plane", 0)[0] == 2
    assert run("sa", tmp_path / "missing.json", "--half-plane", 0)[0] == 2
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"kind": "retarded", "A": [{"matrix": [[1, 2]], "delay": 0}]}))
    assert run("sa", wrong, "--half-plane", 0)[0] == 2
    assert run("hiopt", SYSTEMS / "mixed.json", "--alpha", 2)[0] == 2
    assert run("frobnicate", SYSTEMS / "rdde1.json")[0] == 2
    # Numerical failure: no sign change of the pseudospectral abscissa.
    assert run("dins", SYSTEMS / "turning.json", "--interval", 0, 0.1)[0] == 3
    assert "error" in capsys.readouterr().err


def test_warning_text_on_stderr(capsys):
    code, _ = run("roots", SYSTEMS / "rdde1.json", "--half-plane", -50, "--max-size-evp", 40)
    assert code == 0
    assert "Size of the generalized EVP would exceed its maximum value" in capsys.readouterr().err
