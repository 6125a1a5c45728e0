import json
import math

import numpy as np
import pytest

from gchain import PointSet, TabulatedClass
from gchain.cli import main


@pytest.fixture
def files(tmp_path):
    rng = np.random.default_rng(0)
    paths = {}
    paths["two"] = tmp_path / "two.json"
    PointSet(np.array([[1.0], [-1.0]])).save(paths["two"])
    paths["single"] = tmp_path / "single.json"
    PointSet(np.array([[0.5, 0.5]])).save(paths["single"])
    paths["rand"] = tmp_path / "rand.csv"
    np.savetxt(paths["rand"], rng.standard_normal((20, 3)), delimiter=",")
    Y = PointSet(rng.standard_normal((6, 2)))
    paths["consts"] = tmp_path / "consts.json"
    paths["consts"].write_text(json.dumps(TabulatedClass(np.tile(rng.standard_normal((3, 1, 2)), (1, 6, 1)), Y).to_dict()))
    paths["risk"] = tmp_path / "risk.json"
    paths["risk"].write_text(json.dumps({"empirical_mean": 0.0, "n": 9, "g_hat": 0.0, "delta": 2 * math.exp(-2)}))
    paths["tl"] = tmp_path / "tl.json"
    paths["tl"].write_text(json.dumps({"b1": 1, "b2": 1, "delta1": 1, "delta2": 1, "m1": 4, "n": 100}))
    paths["deep"] = tmp_path / "deep.json"
    rows = [{"lip": 1.5, "r_val": 0.4, "g_base": 0.3, "diam_in": 2.0, "g0": 0.0}, {"lip": 0.8, "r_val": 0.9, "g_base": 0.1, "diam_in": 1.0}, {"lip": 1.1, "r_val": 0.2, "g_base": 0.5, "diam_in": 3.0}]
    paths["deep"].write_text(json.dumps({"layers": rows, "c1": 2.0, "c2": 1.5}))
    return paths


def run(capsys, *args):
    code = main([str(a) for a in args])
    out = capsys.readouterr().out
    return code, out


def test_estimate_D_singleton(files, capsys):
    code, out = run(capsys, "estimate", "D", files["single"])
    assert code == 0 and json.loads(out)["rows"][0]["value"] == 0.0


def test_estimate_G_two_point(files, capsys):
    code, out = run(capsys, "estimate", "G", files["two"], "--budget", 1_000_000)
    row = json.loads(out)["rows"][0]
    assert code == 0 and abs(row["value"] - math.sqrt(2 / math.pi)) <= 4 * row["std_error"]


def test_estimate_L_and_R_constants(files, capsys):
    code, out = run(capsys, "estimate", "L", files["consts"])
    assert code == 0 and json.loads(out)["rows"][0]["value"] == 0.0
    code, out = run(capsys, "estimate", "R", files["consts"], "--budget", 1000)
    assert code == 0 and json.loads(out)["rows"][0]["value"] == 0.0


def test_output_embeds_config_and_hash_and_is_reproducible(files, capsys, tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    assert main(["estimate", "G", str(files["rand"]), "--budget", "5000", "--seed", "3", "--out", str(a)]) == 0
    assert main(["estimate", "G", str(files["rand"]), "--budget", "5000", "--seed", "3", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["run_config"] == {"seed": 3, "mc_budget": 5000, "trials": 10000, "sigma_slack": 4.0, "ratio_r": 2.0, "output_format": "json"}
    assert len(doc["input_hash"]) == 64


def test_config_file_precedence(files, capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 9, "mc_budget": 3000}))
    code, out = run(capsys, "estimate", "G", files["rand"], "--config", cfg, "--seed", 4)
    rc = json.loads(out)["run_config"]
    assert code == 0 and rc["seed"] == 4 and rc["mc_budget"] == 3000


def test_csv_output(files, capsys):
    code, out = run(capsys, "estimate", "D", files["two"], "--format", "csv")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "input,kind,value,std_error,seed" and lines[1].split(",")[2] == "2.0"


def test_parse_error_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["estimate", "G", str(bad)]) == 2
    assert main(["estimate", "G", str(tmp_path / "missing.json")]) == 2
    assert main(["estimate", "G", str(bad), "--ratio", "1.5"]) == 2


def test_invariant_violation_exit_3(tmp_path, capsys):
    dup = tmp_path / "dup.json"
    PointSet(np.array([[1.0, 1.0], [1.0, 1.0]])).save(dup)
    cls = tmp_path / "cls.json"
    cls.write_text(json.dumps(TabulatedClass(np.ones((2, 2, 1)), PointSet(np.array([[1.0, 1.0], [1.0, 1.0]]))).to_dict()))
    assert main(["estimate", "L", str(cls)]) == 3


def test_chaining_two_point(files, capsys):
    code, out = run(capsys, "chaining", files["two"], "--delta", "0.1", "--trials", 5000, "--budget", 20000)
    row = json.loads(out)["rows"][0]
    assert code == 0
    assert math.isclose(row["functional"], 0.5 * math.sqrt(math.log(2)), rel_tol=1e-12)
    assert row["explicit_bound"] >= row["G_hat"]


def test_chaining_singleton_zeros(files, capsys):
    code, out = run(capsys, "chaining", files["single"])
    row = json.loads(out)["rows"][0]
    assert code == 0 and row["functional"] == row["explicit_bound"] == row["G_hat"] == row["exceedance"] == 0.0


def test_chaining_random(files, capsys, tmp_path):
    code, out = run(capsys, "chaining", files["rand"], "--delta", "0.1", "--tree-out", tmp_path / "t.json")
    row = json.loads(out)["rows"][0]
    assert code == 0 and row["exceedance"] < row["exceedance_limit"]
    assert (tmp_path / "t.json").exists()


def test_bounds_risk_total_one(files, capsys):
    code, out = run(capsys, "bounds", "risk", files["risk"])
    assert code == 0 and json.loads(out)["reports"][0]["total"] == 1.0


def test_bounds_multitask_grid(files, capsys):
    code, out = run(capsys, "bounds", "multitask", files["tl"], "--T", 1, 10, 1000000)
    reps = json.loads(out)["reports"]
    firsts = [next(t["value"] for t in r["terms"] if t["name"] == "dominant_first") for r in reps]
    assert code == 0 and firsts[2] < 1e-2 * firsts[0]


def test_bounds_two_layer_and_deep(files, capsys):
    code, out = run(capsys, "bounds", "two-layer", files["tl"])
    assert code == 0 and json.loads(out)["reports"][0]["name"] == "two-layer"
    code, out = run(capsys, "bounds", "deep", files["deep"])
    rep = json.loads(out)["reports"][0]
    ind = next(t["value"] for t in rep["terms"] if t["name"] == "induction")
    assert code == 0 and math.isclose(ind, rep["total"], rel_tol=1e-12)


def test_verify_chain_singleton_and_contraction(capsys, tmp_path):
    code, out = run(capsys, "verify-chain", "--kind", "singleton", "--instances", 5, "--suite-out", tmp_path / "s.jsonl")
    fit = json.loads(out)["fit"]
    assert code == 0 and fit["c1"] == fit["c2"] == 0.0
    assert len((tmp_path / "s.jsonl").read_text().splitlines()) == 5
    code, out = run(capsys, "verify-chain", "--kind", "contraction", "--instances", 10)
    fit = json.loads(out)["fit"]
    assert code == 0 and fit["c1"] <= 1.1 and fit["c2"] == 0.0


def test_verify_chain_assertion_exit_4(capsys, monkeypatch):
    import gchain.cli as cli

    monkeypatch.setattr(cli, "verify_constants", lambda suite, c1, c2: [suite[0].instance])
    code, out = run(capsys, "verify-chain", "--kind", "random", "--instances", 3, "--budget", 500)
    doc = json.loads(out)
    assert code == 4
    assert doc["binding_dump"]["instance"] == doc["failures"][0]["instance"]
    assert "run_config" in doc
