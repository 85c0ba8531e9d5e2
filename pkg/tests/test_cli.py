import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from entgen.cli import main, read_trace_csv
from entgen.entmeas import asymptotic_entropy


def run_cli(*args):
    return main([str(a) for a in args])


def test_simulate_rows_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run_cli("simulate", "--n", 8, "--gate", "xy", "--steps", 50, "--replicas", 40,
                       "--seed", 3, "--out", p) == 0
    lines = a.read_text().splitlines()
    assert lines[0].startswith("t,purity_mean,purity_se,entropy_mean,entropy_se")
    assert len(lines) == 52
    assert a.read_bytes() == b.read_bytes()
    cols = read_trace_csv(a)
    assert cols["purity_mean"][0] == 1.0 and cols["purity_mean"][-1] < 0.5


def test_simulate_json_and_schmidt(capsys):
    assert run_cli("simulate", "--n", 4, "--steps", 3, "--replicas", 5, "--format", "json",
                   "--measures", "purity,schmidt") == 0
    obj = json.loads(capsys.readouterr().out)
    assert len(obj["t"]) == 4 and obj["entropy_mean"] is None
    assert np.allclose(np.sum(obj["mu2_mean"], axis=1), 1)


def test_exit_codes(capsys):
    assert run_cli("simulate", "--n", 5) == 2
    assert run_cli("simulate", "--n", 30) == 3
    assert run_cli("gap", "--gate", "canonical:0.5,0,0", "--n-range", "4:4") == 2
    assert "Clifford" in capsys.readouterr().err
    assert run_cli("simulate", "--n", 4, "--gate", "toffoli") == 2
    assert run_cli("reference", "--n", 7) == 2
    assert run_cli("evolve", "--n", 4, "--gate", "cnot", "--mode", "lumped") == 2


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "entgen", "reference", "--n", "2"],
                         capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["purity_inf"] == pytest.approx(0.8)


def test_reference(capsys):
    assert run_cli("reference", "--n", 16) == 0
    obj = json.loads(capsys.readouterr().out)
    assert obj["entropy_inf"] == pytest.approx(asymptotic_entropy(16))
    assert obj["entropy_inf"] == pytest.approx(7.278652, abs=1e-6)
    assert len(obj["mu2"]) == 256


def test_manifest_and_replay(tmp_path):
    out = tmp_path / "run" / "trace.csv"
    assert run_cli("simulate", "--n", 4, "--steps", 10, "--replicas", 20, "--seed", 5,
                   "--out", out) == 0
    man_path = out.with_name("trace.csv.manifest.json")
    man = json.loads(man_path.read_text())
    assert man["command"] == "simulate" and man["seed"] == 5
    assert man["config"]["replicas"] == 20 and "version" in man and man["wall_time"] >= 0
    assert man["outputs"]["trace.csv"] == hashlib.sha256(out.read_bytes()).hexdigest()
    original = out.read_bytes()
    out.unlink()
    assert run_cli("replay", man_path) == 0
    assert out.read_bytes() == original
    other = tmp_path / "again.csv"
    assert run_cli("replay", man_path, "--out", other) == 0
    assert other.read_bytes() == original
    assert run_cli("replay", tmp_path / "missing.json") == 2


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('n = 4\nsteps = 2\n[simulate]\nsteps = 3\nreplicas = 2\nformat = "json"\n')
    assert run_cli("simulate", "--config", cfg) == 0
    obj = json.loads(capsys.readouterr().out)
    assert obj["config"]["steps"] == 3 and obj["config"]["replicas"] == 2
    assert run_cli("simulate", "--config", cfg, "--steps", 5) == 0
    assert json.loads(capsys.readouterr().out)["config"]["steps"] == 5
    bad = tmp_path / "bad.toml"
    bad.write_text("bogus = 1\n")
    assert run_cli("simulate", "--config", bad, "--n", 4) == 2


def test_gap_command(capsys):
    assert run_cli("gap", "--gate", "cnot", "--coupling", "random", "--n-range", "4:5",
                   "--topk", 8) == 0
    obj = json.loads(capsys.readouterr().out)
    r4, r5 = obj["results"]
    assert (r4["n"], r4["mode"], r4["dim"], r4["method"]) == (4, "full", 256, "dense")
    assert r4["gap"] == pytest.approx(0.2709385763545722, abs=1e-12)
    assert r4["unit_multiplicity"] == 2 and r4["tau"] == pytest.approx(1 / r4["gap"])
    assert r5["method"] == "arnoldi-locked"
    # CNOT random: second nontrivial eigenvalue (n-1)-fold
    assert r5["degeneracy_profile"][:2] == [1, 4]
    assert run_cli("gap", "--gate", "u4", "--n-range", "12:12") == 0
    r = json.loads(capsys.readouterr().out)["results"][0]
    assert r["mode"] == "lumped" and r["dim"] == 4096
    assert r["gap"] == pytest.approx(0.08861852674738202, abs=1e-9)


def test_dump_kernel(capsys):
    assert run_cli("gap", "--gate", "u4", "--dump-kernel") == 0
    assert json.loads(capsys.readouterr().out)["lump"]["lumpable"] is True


def test_evolve_and_fit_round_trip(tmp_path, capsys):
    trace = tmp_path / "ev.csv"
    assert run_cli("evolve", "--n", 4, "--gate", "u4", "--mode", "lumped", "--steps", 60,
                   "--out", trace) == 0
    cols = read_trace_csv(trace)
    assert len(cols["t"]) == 61 and cols["purity"][0] == 1.0
    assert run_cli("fit", "--model", "kappa", "--input", trace, "--n", 4) == 0
    fit = json.loads(capsys.readouterr().out)
    assert fit["model"] == "kappa" and fit["params"]["kappa"] > 0
    assert fit["window"][0] == 3
    assert run_cli("fit", "--model", "tau", "--input", trace, "--n", 4, "--window", "5:40") == 0
    tau = json.loads(capsys.readouterr().out)
    assert tau["params"]["tau"] == pytest.approx(4 / fit["params"]["kappa"], rel=0.05)


def test_fit_gap_table(tmp_path, capsys):
    table = tmp_path / "gaps.csv"
    table.write_text("n,gap\n" + "".join(f"{n},{1.33 / (n + 2.5)!r}\n" for n in range(6, 13)))
    assert run_cli("fit", "--model", "gap-linear", "--input", table) == 0
    fit = json.loads(capsys.readouterr().out)
    assert fit["params"]["c"] == pytest.approx(1.33, abs=1e-9)
    assert fit["params"]["d"] == pytest.approx(2.5, abs=1e-9)


def test_sweep_command(tmp_path):
    out = tmp_path / "sweep.csv"
    assert run_cli("sweep", "--n", 4, "--grid-step", 0.5, "--T", 15, "--replicas", 20,
                   "--out", out) == 0
    rows = out.read_text().splitlines()
    # step 0.5 leaves ten distinct fundamental-domain points
    assert rows[0] == "ax,ay,az,kappa,kappa_se" and len(rows) == 11
    man = json.loads(out.with_name("sweep.csv.manifest.json").read_text())
    assert set(man["argmax"]) == {"ax", "ay", "az", "kappa", "kappa_se"}
