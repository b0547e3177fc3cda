import json
import math
import os
import subprocess
import sys

import pytest

from seqdetect.cli import main

HAND_SPEC = {"a": {"kind": "polynomial", "scale": 1.0, "exponent": 1.0},
             "sigma": {"kind": "polynomial", "scale": 1.0, "exponent": 0.0},
             "q": 2.0, "r": math.sqrt(0.625), "eps": 1.0, "K": 64}


def run_cli(tmp_path, config, args=(), name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return main(["--config", str(path), *args])


def test_solve_writes_solution_and_csv(tmp_path):
    out = tmp_path / "sol.json"
    code = run_cli(tmp_path, {"action": "solve", "spec": HAND_SPEC,
                              "out": str(out)})
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["solution"]["u"] == pytest.approx(math.sqrt(34.0) / 16.0,
                                                     abs=1e-9)
    assert payload["solution"]["m"] == 2
    assert max(payload["residuals"].values()) < 1e-8
    csv_lines = (tmp_path / "sol.csv").read_text().strip().splitlines()
    assert csv_lines[0].startswith("# config: ")
    assert csv_lines[1] == "k,a_k,sigma_k,eta_sq_k,w_k"
    assert len(csv_lines) == 4
    # 17 significant digits survive a float round trip
    value = float(csv_lines[2].split(",")[3])
    assert value == payload["solution"]["eta_sq"][0]


def test_malformed_config_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    out = tmp_path / "never.json"
    assert main(["--config", str(path), "--out", str(out)]) == 2
    assert not out.exists()
    assert "seqdetect:error:config" in capsys.readouterr().err


def test_unknown_field_rejected(tmp_path, capsys):
    out = tmp_path / "never.json"
    code = run_cli(tmp_path, {"action": "solve", "spec": HAND_SPEC,
                              "out": str(out), "bogus": 1})
    assert code == 2
    assert not out.exists()


def test_unsolvable_radius_exits_3(tmp_path, capsys):
    spec = dict(HAND_SPEC, r=5.0)
    code = run_cli(tmp_path, {"action": "solve", "spec": spec,
                              "out": str(tmp_path / "x.json")})
    assert code == 3
    assert "seqdetect:error:numeric" in capsys.readouterr().err


def test_mc_idempotent(tmp_path):
    config = {"action": "mc", "spec": dict(HAND_SPEC, r=0.5, eps=0.25),
              "rule": {"kind": "truncated_chi_sq", "m": 4, "H": 1.64},
              "alternative": [0.3, 0.2, 0.1, 0.0],
              "reps": 2000, "seed": 7}
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    assert run_cli(tmp_path, dict(config, out=str(out1))) == 0
    assert run_cli(tmp_path, dict(config, out=str(out2)), name="c2.json") == 0
    blob1, blob2 = out1.read_bytes(), out2.read_bytes()
    assert json.loads(blob1)["report"] == json.loads(blob2)["report"]
    report = json.loads(blob1)["report"]
    assert set(report) >= {"alpha_hat", "beta_hat", "gamma_hat", "ci", "seed", "reps"}


def test_env_seed_override(tmp_path):
    config = {"action": "mc", "spec": dict(HAND_SPEC, r=0.5, eps=0.25),
              "rule": {"kind": "truncated_chi_sq", "m": 4, "H": 1.64},
              "alternative": [0.3, 0.2, 0.1, 0.0],
              "reps": 500, "seed": 7, "out": "", "format": "json"}
    out = tmp_path / "env.json"
    config["out"] = str(out)
    old = os.environ.get("SEQDETECT_SEED")
    os.environ["SEQDETECT_SEED"] = "123"
    try:
        assert run_cli(tmp_path, config) == 0
    finally:
        if old is None:
            os.environ.pop("SEQDETECT_SEED", None)
        else:
            os.environ["SEQDETECT_SEED"] = old
    assert json.loads(out.read_text())["report"]["seed"] == 123


def test_rates_table(tmp_path):
    out = tmp_path / "rates.csv"
    config = {"action": "rates", "format": "csv", "out": str(out),
              "cases": [{"pair": "mild_sobolev", "alpha": 1.0, "beta": 1.0,
                         "q": 2.0, "eps": 1e-3},
                        {"pair": "severe_analytic", "alpha": 1.0, "beta": 1.0,
                         "q": 2.0, "eps": 1e-3}]}
    assert run_cli(tmp_path, config) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[1] == "pair,alpha,beta,q,eps,r_star,r_ad,payment_class"
    row = lines[2].split(",")
    assert float(row[5]) == pytest.approx((1e-3) ** (4.0 / 9.0), rel=1e-12)
    assert row[7] == "sqrt_loglog"


def test_sweep(tmp_path):
    out = tmp_path / "sweep.json"
    config = {"action": "sweep", "spec": dict(HAND_SPEC, r=0.5, eps=0.25),
              "parameter": "r", "values": [0.3, 0.5, 0.7], "out": str(out)}
    assert run_cli(tmp_path, config) == 0
    rows = json.loads(out.read_text())["rows"]
    assert len(rows) == 3
    assert rows[0]["u"] < rows[1]["u"] < rows[2]["u"]
    assert all("beta_theory" in row for row in rows)


def test_adaptive_action(tmp_path):
    out = tmp_path / "adaptive.json"
    config = {"action": "adaptive", "pair": "mild_sobolev",
              "spec": {"q": 2.0, "r": 0.05, "eps": 0.01, "K": 128},
              "grid": {"alpha": [0.9, 1.1], "beta": [1.0]},
              "rule": {"kind": "chi_grid", "L": 2, "C": 2.5},
              "reps": 400, "seed": 5, "out": str(out)}
    assert run_cli(tmp_path, config) == 0
    payload = json.loads(out.read_text())
    assert len(payload["rows"]) == 2
    assert payload["u_sigma"] == min(row["u"] for row in payload["rows"])
    assert payload["margin"] > 0.0


def test_preset_config(tmp_path):
    out = tmp_path / "heat.json"
    config = {"action": "solve", "spec": {"preset": "heat", "r": 0.3, "eps": 0.1},
              "out": str(out)}
    assert run_cli(tmp_path, config) == 0
    assert json.loads(out.read_text())["solution"]["u"] > 0.0


def test_console_entry_point(tmp_path):
    out = tmp_path / "sol.json"
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"action": "solve", "spec": HAND_SPEC,
                                "out": str(out)}))
    proc = subprocess.run([sys.executable, "-m", "seqdetect.cli",
                           "--config", str(path)], capture_output=True)
    assert proc.returncode == 0
    assert out.exists()


def test_csv_outputs_embed_config(tmp_path):
    out = tmp_path / "rates.csv"
    config = {"action": "rates", "format": "csv", "out": str(out),
              "cases": [{"pair": "severe_sobolev", "alpha": 1.0, "beta": 1.0,
                         "q": 2.0, "eps": 1e-4}]}
    assert run_cli(tmp_path, config) == 0
    first = out.read_text().splitlines()[0]
    assert first.startswith("# config: ")
    embedded = json.loads(first[len("# config: "):])
    assert embedded["action"] == "rates"
    assert "seed" in embedded


def test_mc_trace_flag(tmp_path):
    out = tmp_path / "mc.json"
    trace = tmp_path / "trace.csv"
    config = {"action": "mc", "spec": dict(HAND_SPEC, r=0.5, eps=0.25),
              "rule": {"kind": "truncated_chi_sq", "m": 4, "H": 1.64},
              "alternative": [0.3, 0.2, 0.1, 0.0],
              "reps": 300, "seed": 7, "out": str(out), "trace": str(trace)}
    assert run_cli(tmp_path, config) == 0
    lines = trace.read_text().strip().splitlines()
    assert lines[0] == "rule_id,rep,statistic,reject"
    assert len(lines) == 301
