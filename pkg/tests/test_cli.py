import subprocess
import sys

import numpy as np
import pytest

from adaptive_bias.cli import FIT_FIELDS, load_study, main
from adaptive_bias.designs import updown_next
from adaptive_bias.sim import read_trials_csv


def write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture
def ud_cfg(tmp_path):
    return write(tmp_path / "ud.ini", "[scenario]\nscheme = UD\nN = 4\nT = 12\nseed = 3\n")


def test_simulate_minimal_fd(tmp_path):
    cfg = write(tmp_path / "c.ini", "[scenario]\nscheme = FD\nN = 1\nT = 1\n")
    out = tmp_path / "t.csv"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "subject,t,level,intensity,response" and len(lines) == 2


def test_simulate_is_deterministic_and_valid(tmp_path, ud_cfg):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--config", ud_cfg, "--out", str(a)]) == 0
    assert main(["simulate", "--config", ud_cfg, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    main(["simulate", "--config", ud_cfg, "--out", str(c), "--seed", "4"])
    assert c.read_bytes() != a.read_bytes()
    data = read_trials_csv(a, L=10)
    for s in data:
        for t in range(1, len(s.levels)):
            assert s.levels[t] == updown_next(s.levels[t - 1], s.responses[t - 1], 10)


def test_fit_two_level_closed_form(tmp_path, capsys):
    rows = ["subject,t,level,intensity,response"]
    ys = {1: [1, 0, 0, 0], 2: [1, 1, 1, 0]}
    t = 0
    for lev, resp in ys.items():
        for y in resp:
            t += 1
            rows.append(f"1,{t},{lev},{float(lev)},{y}")
    p = write(tmp_path / "two.csv", "\n".join(rows) + "\n")
    assert main(["fit", p, "--estimator", "logistic,nonparametric"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == ",".join(FIT_FIELDS)
    est = {ln.split(",")[1]: float(ln.split(",")[2]) for ln in out[1:]}
    # logit(1/4) at x = 1 and logit(3/4) at x = 2
    assert est["b"] == pytest.approx(2 * np.log(3), abs=1e-9)
    assert est["a"] == pytest.approx(-3 * np.log(3), abs=1e-9)
    assert est["pi[1]"] == 0.25 and est["pi[2]"] == 0.75


def test_fit_round_trip_and_latent(tmp_path):
    cfg = write(tmp_path / "l.ini", "[scenario]\nscheme = FDr\neffect_model = latent\nN = 40\nT = 40\nA = 2\n")
    trials = tmp_path / "l.csv"
    assert main(["simulate", "--config", cfg, "--out", str(trials), "--oracle-alpha"]) == 0
    out = tmp_path / "fit.csv"
    assert main(["fit", str(trials), "--estimator", "latent_em", "--A", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 + 21
    assert all(ln.split(",")[4] == "true" for ln in lines[1:])


def test_fit_numerical_failure_exit_code(tmp_path):
    rows = ["subject,t,level,intensity,response"] + [f"1,{t},{1 + t % 2},{0.02 * (1 + t % 2)},1" for t in range(1, 7)]
    p = write(tmp_path / "sep.csv", "\n".join(rows) + "\n")
    assert main(["fit", p, "--estimator", "logistic", "--out", str(tmp_path / "f.csv")]) == 3


@pytest.mark.parametrize("text,needle", [
    ("[scenario]\nscheme = UD\nN = five\n", ":3: [scenario] N"),
    ("[scenario]\nscheme = UD\nbogus = 1\n", ":3: [scenario] bogus"),
    ("[scenario]\nscheme = ZZ\n", ":2: [scenario] scheme"),
    ("[scenario]\nscheme = FD\nN = 3\nN = 4\n", "line 4"),
    ("scheme = UD\n", "no section headers"),
    ("[other]\nx = 1\n", "missing [scenario]"),
])
def test_config_errors(tmp_path, capsys, text, needle):
    cfg = write(tmp_path / "bad.ini", text)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "x.csv")]) == 2
    assert needle in capsys.readouterr().err


def test_bad_arguments_exit_2(capsys):
    assert main(["simulate"]) == 2
    assert main(["nope"]) == 2
    assert main(["fit", "missing.csv", "--estimator", "logistic"]) == 2


def test_study_command(tmp_path):
    cfg = write(tmp_path / "g.ini", "[study]\nsetups = 1\nschemes = FD, UD\nR = 10\n")
    out = tmp_path / "out"
    assert main(["study", "--config", cfg, "--out", str(out)]) == 0
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0] == "scenario_id,scheme,estimator,param,truth,absBias,relBias,SE,RMSE,R_effective"
    assert len(summary) == 1 + 2 * 3
    assert (out / "plot_data.csv").read_text().startswith("scheme,N,T,param,measure,value\n")


def test_study_config_variants(tmp_path):
    full = write(tmp_path / "full.ini", "[study]\nsetups = 1-12\n")
    grid, _ = load_study(full)
    assert len(grid) == 48
    explicit = write(tmp_path / "ex.ini", "[scenario:a]\nscheme = FD\nR = 5\n[scenario:b]\nscheme = UD\nR = 5\n")
    grid, _ = load_study(explicit, seed=9)
    assert [i for i, _ in grid.scenarios] == ["a", "b"] and grid.scenarios[1][1].seed == 9
    bad = write(tmp_path / "bad.ini", "[study]\nsetups = 13\n")
    with pytest.raises(ValueError):
        load_study(bad)


def test_bias_check_command(tmp_path, capsys):
    cfg = write(tmp_path / "fd.ini", "[scenario]\nscheme = FD\nN = 5\nT = 10\n")
    assert main(["bias-check", "--config", cfg, "--R", "1000", "--level", "4"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1].startswith("level=4 lhs=") and "mc_se=" in out[1]
    assert main(["bias-check", "--config", cfg, "--level", "11"]) == 2


def test_dag_check_command(tmp_path, capsys):
    assert main(["dag-check", "--scheme", "UD", "--T", "5", "Y3 | Y1,Y2,S1,S2 | S3"]) == 0
    assert capsys.readouterr().out.strip() == "independent"
    assert main(["dag-check", "--scheme", "UDr", "--T", "5", "S3 | alpha"]) == 0
    assert capsys.readouterr().out.strip() == "dependent"
    g = write(tmp_path / "g.txt", "a -> c\nb -> c\n")
    main(["dag-check", "--graph", g, "a | b | c"])
    assert capsys.readouterr().out.strip() == "dependent"
    cyc = write(tmp_path / "cyc.txt", "a -> b\nb -> a\n")
    assert main(["dag-check", "--graph", cyc, "a | b"]) == 2


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "adaptive_bias.cli", "dag-check", "--scheme", "FD", "--T", "3",
                        "Y1 | Y2"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "independent"
