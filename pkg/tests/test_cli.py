"""End-to-end coverage of the command-line interface."""

from __future__ import annotations

import json
import math
import re

import numpy as np
import pytest

from conftest import mild_model, random_positive_model
from growthcert import Policy, estimate_growth, load_model, save_model, solve_eigen
from growthcert.cli import run


def _invoke(capsys, *argv):
    code = run(list(argv))
    out = capsys.readouterr().out
    return code, out


def _invoke_json(capsys, *argv):
    code, out = _invoke(capsys, *argv)
    return code, json.loads(out)


def _write_fib(capsys, tmp_path) -> str:
    path = str(tmp_path / "fib.json")
    code, doc = _invoke_json(capsys, "gen", "graph", "--adjacency", "11;10",
                             "--out", path)
    assert code == 0
    assert doc == {"family": "graph", "out": path, "states": 2, "actions": 1}
    return path


STRIP_TIMINGS = re.compile(r'"timings_ms": \{[^}]*\}', re.S)


# ---------------------------------------------------------------------------
# happy paths
# ---------------------------------------------------------------------------

def test_gen_then_validate_round_trip(capsys, tmp_path):
    path = str(tmp_path / "ring.json")
    code, _ = _invoke(capsys, "gen", "graph", "--adjacency", "110;101;010",
                      "--out", path)
    assert code == 0
    code, doc = _invoke_json(capsys, "validate", path)
    assert code == 0
    assert doc["gain_irreducible"] is True
    assert doc["stochastic_ok"] is True
    assert doc["states"] == 3 and doc["actions"] == 1


def test_solve_fibonacci_with_fallback(capsys, tmp_path):
    path = _write_fib(capsys, tmp_path)
    code, doc = _invoke_json(capsys, "solve", path, "--tol", "1e-10",
                             "--eps-fallback", "1e-8")
    assert code == 0
    golden = (1 + math.sqrt(5)) / 2
    assert abs(doc["lambda"] - math.log(golden)) <= 1e-6
    assert doc["regularized"] is True and doc["epsilon"] == 1e-8
    assert doc["converged"] is True
    assert abs(doc["lambda"] - math.log(doc["rho"])) <= 1e-12
    assert doc["cw_lower"] <= doc["rho"] <= doc["cw_upper"]
    assert doc["policy"]["kind"] == "deterministic"
    cert = doc["certificate"]
    assert cert["gap"] <= 10 * 1e-10 * max(1.0, abs(doc["lambda"]))
    assert cert["primal_lower"] - 1e-9 <= doc["lambda"] <= cert["dual_upper"] + 1e-9


def test_solve_output_is_byte_stable(capsys, tmp_path):
    model = random_positive_model(5)
    path = str(tmp_path / "model.json")
    save_model(model, path)
    code_a, out_a = _invoke(capsys, "solve", path)
    code_b, out_b = _invoke(capsys, "solve", path)
    assert code_a == code_b == 0
    assert STRIP_TIMINGS.sub("", out_a) == STRIP_TIMINGS.sub("", out_b)
    assert out_a.endswith("\n")
    # spot-check the 17-significant-digit float convention
    rho = json.loads(out_a)["rho"]
    assert f'"rho": {rho:.17g}' in out_a


def test_solve_agrees_with_library_call(capsys, tmp_path):
    model = random_positive_model(3)
    path = str(tmp_path / "model.json")
    save_model(model, path)
    code, doc = _invoke_json(capsys, "solve", path)
    assert code == 0
    sol = solve_eigen(model)
    assert doc["lambda"] == sol.log_rho
    assert doc["psi"] == list(sol.psi)


def test_variational_command_on_positive_model(capsys, tmp_path):
    model = random_positive_model(3)
    path = str(tmp_path / "model.json")
    save_model(model, path)
    code, doc = _invoke_json(capsys, "variational", path, "--seed", "1")
    assert code == 0
    sol = solve_eigen(model)
    assert doc["residual"] <= 1e-6
    assert sol.log_rho - 1e-4 <= doc["value"] <= sol.log_rho + 1e-9
    eta = np.array(doc["eta"])
    assert abs(eta.sum() - 1.0) <= 1e-9


def test_bounds_command(capsys, tmp_path):
    path = _write_fib(capsys, tmp_path)
    fpath = tmp_path / "f.json"
    fpath.write_text("[1.0, 0.6]\n")
    code, doc = _invoke_json(capsys, "bounds", path, "--f", str(fpath))
    assert code == 0
    assert abs(doc["lower"] - 1.6) <= 1e-12
    assert abs(doc["upper"] - 5.0 / 3.0) <= 1e-12


def test_mc_command_matches_library(capsys, tmp_path):
    model = mild_model(2)
    path = str(tmp_path / "model.json")
    save_model(model, path)
    policy = Policy.uniform(model.n_states, model.n_actions)
    ppath = tmp_path / "policy.json"
    ppath.write_text(json.dumps({"phi": policy.phi.tolist()}))
    code, doc = _invoke_json(capsys, "mc", path, "--policy", str(ppath),
                             "--n", "50", "--paths", "400", "--seed", "11")
    assert code == 0
    est = estimate_growth(model, policy, n=50, paths=400, seed=11)
    assert doc["point"] == est.point
    assert doc["stderr"] == est.stderr
    assert doc["all_paths_dead"] is False


def test_eps_sweep_writes_matching_csv(capsys, tmp_path):
    path = _write_fib(capsys, tmp_path)
    out = tmp_path / "sweep.csv"
    code, text = _invoke(capsys, "eps-sweep", path, "--grid", "1e-2,1e-4,1e-6",
                         "--out", str(out))
    assert code == 0
    assert out.read_text() == text
    lines = text.strip().splitlines()
    assert lines[0] == "epsilon,lambda_eps,converged,iterations"
    assert len(lines) == 4
    rows = [line.split(",") for line in lines[1:]]
    values = [float(r[1]) for r in rows]
    assert values[0] >= values[1] >= values[2] - 1e-9
    assert all(r[2] == "true" for r in rows)


def test_gen_exit_and_portfolio_families(capsys, tmp_path):
    epath = str(tmp_path / "exit.json")
    code, doc = _invoke_json(
        capsys, "gen", "exit",
        "--p", "1,0,0,0,0;0.5,0,0.5,0,0;0,0.5,0,0.5,0;0,0,0.5,0,0.5;0,0,0,0,1",
        "--s0", "0,4", "--out", epath,
    )
    assert code == 0 and doc["states"] == 3
    code, doc = _invoke_json(capsys, "solve", epath)
    assert code == 0
    assert abs(doc["lambda"] - math.log(math.cos(math.pi / 4))) <= 1e-8

    spath = tmp_path / "support.json"
    spath.write_text(json.dumps([[[[0.6, [1.15]], [0.4, [0.9]]]]]))
    ppath = str(tmp_path / "portfolio.json")
    code, doc = _invoke_json(
        capsys, "gen", "portfolio", "--q", "1.0", "--theta", "2.0",
        "--r-bank", "0.05", "--grid", "0.0;0.5;1.0",
        "--support", str(spath), "--out", ppath,
    )
    assert code == 0 and doc["actions"] == 3
    model = load_model(ppath)
    assert model.n_states == 1
    assert "theta=2" in model.metadata


# ---------------------------------------------------------------------------
# failure modes and exit codes
# ---------------------------------------------------------------------------

def test_validate_non_stochastic_model_exits_2(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({
        "states": ["a", "b"], "actions": ["u"],
        "kernel": [[[0.5, 0.4]], [[0.5, 0.5]]],
        "weights": [[[1.0, 1.0]], [[1.0, 1.0]]],
    }))
    code, doc = _invoke_json(capsys, "validate", str(path))
    assert code == 2
    assert doc["error"]["type"] == "NotStochastic"
    assert doc["error"]["violations"] == [[0, 0]]


def test_malformed_json_exits_2(capsys, tmp_path):
    path = tmp_path / "garbage.json"
    path.write_text("{not json")
    code, doc = _invoke_json(capsys, "validate", str(path))
    assert code == 2
    assert doc["error"]["type"] == "ParseError"
    assert "line 1" in doc["error"]["message"]


def test_missing_file_exits_2(capsys, tmp_path):
    code, doc = _invoke_json(capsys, "solve", str(tmp_path / "absent.json"))
    assert code == 2


def test_solver_budget_exhausted_exits_3_with_report(capsys, tmp_path):
    path = _write_fib(capsys, tmp_path)
    code, doc = _invoke_json(capsys, "solve", path, "--max-iter", "3")
    assert code == 3
    assert doc["converged"] is False
    assert doc["error"]["type"] == "NoConvergence"
    assert doc["certificate"] is None
    assert doc["cw_lower"] <= doc["rho"] <= doc["cw_upper"]


def test_usage_errors_exit_4(capsys, tmp_path):
    assert run([]) == 4
    assert run(["frobnicate"]) == 4
    assert run(["bounds", str(tmp_path / "x.json")]) == 4  # missing --f
    assert run(["solve"]) == 4
    capsys.readouterr()  # drain usage noise


def test_reducible_model_without_fallback_exits_2(capsys, tmp_path):
    path = str(tmp_path / "split.json")
    code, _ = _invoke(capsys, "gen", "graph", "--adjacency", "110;110;001",
                      "--out", path)
    assert code == 0
    code, doc = _invoke_json(capsys, "solve", path)
    assert code == 2
    assert doc["error"]["type"] == "ReducibleGain"
    code, doc = _invoke_json(capsys, "solve", path, "--eps-fallback", "1e-8")
    assert code == 0
    assert doc["regularized"] is True


def test_solve_then_mc_smoke_agreement(capsys, tmp_path):
    model = mild_model(6)
    path = str(tmp_path / "model.json")
    save_model(model, path)
    code, sdoc = _invoke_json(capsys, "solve", path)
    assert code == 0
    ppath = tmp_path / "policy.json"
    ppath.write_text(json.dumps({"phi": sdoc["policy"]["phi"]}))
    code, mdoc = _invoke_json(capsys, "mc", path, "--policy", str(ppath),
                              "--n", "200", "--paths", "4000", "--seed", "3")
    assert code == 0
    assert abs(mdoc["point"] - sdoc["lambda"]) <= 3 * mdoc["stderr"]
