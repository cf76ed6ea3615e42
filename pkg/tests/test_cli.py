import csv
import json

import pytest

import oracles
from coexist import cli


def call(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def as_json(text):
    return json.loads(text)


SYS = ["--nA", 20, "--nC", 20, "--S", 10, "--lC", 5]


def test_analyze_cli_example(capsys):
    code, out, _ = call(capsys, "analyze", "--rhoA", 0.5, "--rhoC", 0.5, "--nA", 1, "--nC", 20, "--S", 2, "--lC", 2)
    doc = as_json(out)
    assert code == 0 and doc["agree"]
    assert doc["closed_form"]["lambda_A"] == pytest.approx(oracles.LAMBDA_A_CLI_EXAMPLE, abs=1e-12)
    cli.validate(doc, "analyze")


def test_analyze_zero_traffic_and_provenance(capsys):
    code, out, _ = call(capsys, "analyze", "--qA", 0, "--qC", 0, "--nA", 3, "--nC", 3, "--S", 4, "--lC", 5)
    doc = as_json(out)
    assert code == 0
    assert doc["closed_form"]["lambda_total"] == 0 and doc["closed_form"]["alpha_C"] == 1
    assert doc["closed_form"]["note"] == "general case (linear solve)"


@pytest.mark.parametrize("argv", [
    ["analyze", "--qA", 0.1, "--rhoA", 0.3, "--qC", 0.1, "--nA", 3, "--nC", 3, "--S", 4, "--lC", 5],
    ["analyze", "--qA", 1.5, "--qC", 0.1, "--nA", 3, "--nC", 3, "--S", 4, "--lC", 5],
    ["analyze", "--qA", 0.1, "--nA", 3, "--nC", 3, "--S", 4, "--lC", 5],
    ["analyze", "--bogus"],
])
def test_invalid_config_exit_2(capsys, argv):
    assert call(capsys, *argv)[0] == cli.EXIT_CONFIG


def test_config_file_and_unknown_keys(capsys, tmp_path):
    good = tmp_path / "c.json"
    good.write_text(json.dumps({"system": {"n_A": 1, "n_C": 20, "rho_A": 0.5, "rho_C": 0.5, "S": 2, "l_C": 2}}))
    code, out, _ = call(capsys, "analyze", "--config", good)
    assert code == 0 and as_json(out)["system"]["l_C"] == 2
    # flags override file values
    code, out, _ = call(capsys, "analyze", "--config", good, "--lC", 3)
    assert as_json(out)["system"]["l_C"] == 3
    bad = tmp_path / "b.json"
    bad.write_text(json.dumps({"system": {"n_A": 1}, "plot": {}}))
    assert call(capsys, "analyze", "--config", bad)[0] == cli.EXIT_CONFIG
    bad.write_text(json.dumps({"system": {"nA": 1}}))
    assert call(capsys, "analyze", "--config", bad)[0] == cli.EXIT_CONFIG


def test_optimize_examples(capsys):
    code, out, _ = call(capsys, "optimize", "--gamma", 1, "--nA", 1, "--nC", 20, "--S", 20)
    doc = as_json(out)
    assert code == 0 and doc["result"]["l_C_opt"] == 17
    assert doc["verification"]["ratio_error"] < 1e-6
    code, out, _ = call(capsys, "optimize", "--gamma", 1, "--closed-form", "nAlarge")
    assert as_json(out)["result"]["rho_A_opt"] == pytest.approx(0.5390, abs=5e-5)
    code, out, _ = call(capsys, "optimize", "--gamma", 1, "--nA", 20, "--nC", 20, "--S", 10, "--lc-set", "10,20,30")
    assert as_json(out)["result"]["l_C_opt"] == 10


def test_optimize_infeasible_exit_4(capsys):
    code, _, _ = call(capsys, "optimize", "--gamma", 1e-9, "--nA", 1, "--nC", 20, "--S", 10, "--lc-set", "10")
    assert code == cli.EXIT_INFEASIBLE


def test_simulate_idle_and_manifest(capsys, tmp_path):
    code, out, _ = call(capsys, "simulate", "--T", 10000, "--qA", 0, "--qC", 0, *SYS, "--out", tmp_path)
    assert code == 0 and as_json(out)["result"]["idle_fraction"] == 1
    m = json.loads((tmp_path / "simulate.manifest.json").read_text())
    cli.validate(m, "manifest")
    assert m["seeds"] == [0] and str(tmp_path / "simulate.json") in m["outputs"]


def test_simulate_deterministic_and_seed_env(capsys, monkeypatch, tmp_path):
    args = ["simulate", "--T", 100000, "--rhoA", 0.5, "--rhoC", 0.5, *SYS, "--out", tmp_path]
    monkeypatch.setenv("COEXIST_SEED", "42")
    a = as_json(call(capsys, *args)[1])
    b = as_json(call(capsys, *args)[1])
    assert a == b and a["result"]["seed"] == 42
    c = as_json(call(capsys, *args, "--seed", 3)[1])
    assert c["result"]["seed"] == 3


def test_simulate_close_to_analyze(capsys, tmp_path):
    flags = ["--rhoA", 0.5, "--rhoC", 0.5, *SYS]
    ana = as_json(call(capsys, "analyze", *flags)[1])["closed_form"]
    sim = as_json(call(capsys, "simulate", "--T", 10**7, *flags, "--out", tmp_path)[1])["result"]
    assert sim["lambda_A_hat"] == pytest.approx(ana["lambda_A"], rel=0.02)
    assert sim["lambda_C_hat"] == pytest.approx(ana["lambda_C"], rel=0.02)


def test_wifi_simulation(capsys, tmp_path):
    code, out, _ = call(capsys, "simulate", "--mode", "wifi-lte", "--nW", 20, "--CW", 200, "--lW", 100,
                        "--qL", 0.45, "--T", 10**6, "--out", tmp_path)
    assert code == 0 and as_json(out)["result"]["mode"] == "wifi-lte"


def test_replay_reproduces(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("COEXIST_SEED", "9")
    first = as_json(call(capsys, "simulate", "--T", 50000, "--rhoA", 0.5, "--rhoC", 0.5, *SYS, "--out", tmp_path)[1])
    monkeypatch.delenv("COEXIST_SEED")
    code, out, _ = call(capsys, "replay", tmp_path / "simulate.manifest.json", "--out", tmp_path / "again")
    assert code == 0 and as_json(out) == first


def test_sweep_rows_and_empty(capsys):
    code, out, _ = call(capsys, "sweep", "--vary", "lC", "--range", "1:6:1", "--rhoA", 0.5, "--rhoC", 0.5, *SYS)
    rows = list(csv.reader(out.splitlines()))
    assert code == 0 and len(rows) == 7 and rows[0] == list(cli.rows_to_csv([]).strip().split(","))
    code, out, _ = call(capsys, "sweep", "--vary", "lC", "--range", "", "--rhoA", 0.5, "--rhoC", 0.5, *SYS)
    assert code == 0 and out.strip() == "parameter,lambda_A,lambda_C,lambda_total,ratio,method,seed"


def test_sweep_partial_failures(capsys):
    base = ["sweep", "--vary", "lC", "--rhoA", 0.5, "--rhoC", 0.5, *SYS]
    # one bad point in ten is tolerated
    code, out, err = call(capsys, *base, "--range", "0,1,2,3,4,5,6,7,8,9")
    assert code == 0 and "error" in out and "row failed" in err
    code, _, _ = call(capsys, *base, "--range", "0,-1,2")
    assert code == cli.EXIT_FAIL


def test_sweep_parallel_keeps_order(capsys):
    args = ["sweep", "--vary", "lC", "--range", "9,3,6", "--rhoA", 0.5, "--rhoC", 0.5, *SYS]
    serial = call(capsys, *args)[1]
    parallel = call(capsys, *args, "--jobs", 3)[1]
    assert serial == parallel
    assert [r[0] for r in csv.reader(serial.splitlines())][1:] == ["9", "3", "6"]


def test_sweep_fig7a_preset(capsys, tmp_path):
    code, _, _ = call(capsys, "sweep", "--preset", "fig7a", "--range", "0.2,0.5,0.8", "--out", tmp_path)
    assert code == 0
    assert (tmp_path / "fig7a.figure.json").exists()
    rows = list(csv.DictReader((tmp_path / "fig7a_rhoC0.5_lC30.csv").open()))
    assert len(rows) == 3
    lam = [float(next(csv.DictReader((tmp_path / f"fig7a_rhoC0.5_lC{l}.csv").open()))["lambda_A"])
           for l in (1, 5, 10, 15, 30)]
    assert lam == sorted(lam, reverse=True)
    cli.validate(json.loads((tmp_path / "sweep.json").read_text()), "sweep")
    cli.validate(json.loads((tmp_path / "sweep.manifest.json").read_text()), "manifest")


def test_sweep_gamma_fixed_length(capsys):
    code, out, _ = call(capsys, "sweep", "--vary", "gamma", "--range", "0.5,2", "--nA", 1, "--nC", 20,
                        "--S", 10, "--lc-set", "10")
    rows = list(csv.DictReader(out.splitlines()))
    assert code == 0
    assert [float(r["ratio"]) for r in rows] == pytest.approx([0.5, 2.0], rel=1e-6)


def test_casestudy_small(capsys, tmp_path):
    code, out, _ = call(capsys, "casestudy", "--nW", 20, "--gamma", 1, "--S", 20, "--T", 10**6,
                        "--robust", "lw", "--range", "10,15", "--out", tmp_path)
    doc = as_json(out)
    assert code == 0 and doc["deployment"]["S"] == 20
    assert doc["simulated"]["lambda_A_hat"] > 0
    rows = list(csv.DictReader((tmp_path / "robust_lw.csv").open()))
    assert [r["parameter"] for r in rows] == ["10", "10", "15", "15"]
    cli.validate(doc, "casestudy")


def test_parse_range():
    assert cli.parse_range("1:3:1") == [1, 2, 3]
    assert cli.parse_range("0.1,0.5") == [0.1, 0.5]
    assert cli.parse_range("") == []
    with pytest.raises(cli.ConfigError):
        cli.parse_range("1:3:0")
