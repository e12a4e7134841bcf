import csv
import subprocess
import sys

import numpy as np
import pytest

from vibroimpact import __version__
from vibroimpact.cli import main

BALL = """
[system]
kind = gravity
gravity = 1
restitution = 0.5
[initial]
x1 = 0
y1 = 1
[run]
duration = 10
"""

OSC = """
[system]
p = 0.1
q = 1
a = 1
omega = 1
b_ratio = 0.5
[initial]
x1 = 1.0
y1 = 0.0
[run]
duration = 6.283185307179586
[parameter]
name = b
lo = 1.0
hi = 3.0
"""


def run(tmp_path, text, command, *extra):
    cfg = tmp_path / "run.ini"
    cfg.write_text(text)
    out = tmp_path / "out"
    return main([command, "--config", str(cfg), "--out", str(out), *extra]), out


def _rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.reader(lines))


def test_simulate_ball_writes_headers_and_impacts(tmp_path):
    code, out = run(tmp_path, BALL, "simulate", "--seed", "7")
    assert code == 0
    text = (out / "impacts.csv").read_text().splitlines()
    assert text[0] == f"# vibroimpact {__version__} simulate"
    assert text[1].startswith("# config sha256 ")
    assert text[2] == "# seed 7"
    rows = _rows(out / "impacts.csv")
    Y = np.array([float(r[1]) for r in rows[1:]])
    np.testing.assert_allclose(Y[:15], 0.5 ** np.arange(15), rtol=1e-8)
    assert (out / "trajectory.csv").exists()


def test_digest_ignores_comments(tmp_path):
    code, out = run(tmp_path, BALL, "simulate")
    first = (out / "impacts.csv").read_text().splitlines()[1]
    code, out = run(tmp_path, "# a comment\n" + BALL.replace("= 1\n", "=    1\n"), "simulate")
    assert (out / "impacts.csv").read_text().splitlines()[1] == first


def test_grazing_on_oscillator_holds(tmp_path, capsys):
    code, out = run(tmp_path, OSC, "grazing")
    assert code == 0
    assert "verdict: chaos conditions hold" in capsys.readouterr().out
    assert (out / "grazing.csv").exists()


@pytest.mark.parametrize("entries,code,word", [("0, -1, 1, 0", 4, "fail"),
                                               ("2, 0, 0, 0.5", 4, "indeterminate")])
def test_grazing_on_matrices(tmp_path, capsys, entries, code, word):
    got, _ = run(tmp_path, f"[matrix]\nA = {entries}\n", "grazing")
    assert got == code
    assert word in capsys.readouterr().out


def test_config_errors_exit_2(tmp_path, capsys):
    code, _ = run(tmp_path, "[system]\nq = -1\n", "simulate")
    assert code == 2
    assert "[system] q" in capsys.readouterr().err
    code, _ = run(tmp_path, "[penalty]\nnu = 0, 10\n", "soft")
    assert code == 2
    code, _ = run(tmp_path, "[system]\nkind = spring\n", "simulate")
    assert code == 2
    code, _ = run(tmp_path, "[matrix]\nA = 1, 2, 3\n", "grazing")
    assert code == 2


def test_bad_bracket_is_numeric_failure(tmp_path):
    code, _ = run(tmp_path, OSC.replace("hi = 3.0", "hi = 1.5"), "grazing")
    assert code == 3


def test_scan_records_impacts_across_grazing(tmp_path):
    text = OSC.replace("omega = 1", "omega = 6.283185307179586").replace(
        "lo = 1.0\nhi = 3.0", "lo = 40.0\nhi = 41.0\ncount = 3") + "[run]\nsamples = 3\n"
    text = text.replace("[run]\nduration = 6.283185307179586\n", "")
    code, out = run(tmp_path, text, "scan")
    assert code == 0
    rows = _rows(out / "scan.csv")
    mus = sorted({float(r[0]) for r in rows[1:]})
    assert len(mus) == 3
    impacts = {mu: max(int(r[-1]) for r in rows[1:] if float(r[0]) == mu) for mu in mus}
    assert impacts[mus[0]] == 0 and impacts[mus[-1]] >= 1


def test_soft_elastic(tmp_path, capsys):
    text = OSC.replace("b_ratio = 0.5", "b = 0.3") + "[penalty]\nnu = 1e2, 1e3, 1e4\nscenarios = 3\n"
    code, out = run(tmp_path, text, "soft")
    assert code == 0
    assert "alpha = 0" in capsys.readouterr().out
    assert len(_rows(out / "bounces.csv")) == 1 + 3 * 3


def test_horseshoe_chaos(tmp_path, capsys):
    code, out = run(tmp_path, "[system]\nkind = horseshoe\n[chaos]\narcs = 20\n", "chaos")
    assert code == 0
    assert "covering: 20/20 arcs pass" in capsys.readouterr().out
    for name in ("manifold_unstable", "manifold_stable", "homoclinic", "boxes", "orbits"):
        assert (out / f"{name}.csv").exists()


def test_version_flag_and_console_entry():
    res = subprocess.run([sys.executable, "-m", "vibroimpact.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert __version__ in res.stdout
