import json
from importlib import resources

import numpy as np

import hybridobs as h
from hybridobs.cli import main
from hybridobs.reporting import read_csv_columns
from hybridobs.scenario import canonical_hash, load_scenario

FIXTURES = resources.files("hybridobs") / "scenarios"


def toy_scenario_dict(q=4, horizon=6.0, mode="sync"):
    return {
        "schema_version": 1,
        "name": "toy",
        "plant": {
            "A": [[0.0, 0.0], [0.0, 0.0]],
            "C": [[[1.0, 0.0]], [[0.0, 1.0]]],
            "x0": [1.0, -2.0],
        },
        "rate": {"lambda": 0.5, "lambda_bar": 1.0},
        "timing": {"T": 1.0, "q": q, "delta": "auto", "beta": "auto",
                   "epsilons": 0.0, "seed": 0},
        "graphs": {"full": [[1, 2], [2, 1]]},
        "schedule": {"horizon": horizon, "segments": [[0.0, "full"]]},
        "mode": mode,
        "averaging": "straight",
        "events": [],
        "init": {"xhat": [[2.0, 0.0], [0.0, 1.0]], "w": [[0.7], [-0.3]]},
        "output": {"sample_step": 0.05},
    }


def write_scenario(tmp_path, data, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_design_then_simulate_round_trip(tmp_path):
    scen = write_scenario(tmp_path, toy_scenario_dict())
    out = tmp_path / "out"
    assert main(["design", str(scen), "--out", str(out)]) == 0
    cert_path = out / "certificate.json"
    cert = json.loads(cert_path.read_text())
    assert cert["rho"] == 0.0
    assert cert["q"] == 4
    assert main(["simulate", str(scen), "--cert", str(cert_path), "--out", str(out)]) == 0
    cols = read_csv_columns(out / "trace.csv")
    assert set(cols) >= {"t", "x[1]", "x[2]", "x_1[1]", "x_2[2]", "err_1", "err_2"}
    ev = read_csv_columns(out / "events.csv")
    assert ev["s"][0] == 0.0 and ev["s"][-1] == 6.0
    report = json.loads((out / "run_report.json").read_text())
    assert report["bound_violations"] == 0
    assert report["events"] == 7


def test_simulate_is_bit_deterministic(tmp_path):
    scen = write_scenario(tmp_path, toy_scenario_dict())
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["design", str(scen), "--out", str(out1)])
    main(["simulate", str(scen), "--cert", str(out1 / "certificate.json"), "--out", str(out1)])
    main(["design", str(scen), "--out", str(out2)])
    main(["simulate", str(scen), "--cert", str(out2 / "certificate.json"), "--out", str(out2)])
    assert (out1 / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()
    assert (out1 / "events.csv").read_bytes() == (out2 / "events.csv").read_bytes()
    assert (out1 / "certificate.json").read_bytes() == (out2 / "certificate.json").read_bytes()


def test_certificate_hash_mismatch_refused(tmp_path):
    scen_a = write_scenario(tmp_path, toy_scenario_dict(), "a.json")
    data_b = toy_scenario_dict()
    data_b["init"]["xhat"][0][0] = 3.0
    scen_b = write_scenario(tmp_path, data_b, "b.json")
    out = tmp_path / "out"
    main(["design", str(scen_a), "--out", str(out)])
    code = main(["simulate", str(scen_b), "--cert", str(out / "certificate.json"),
                 "--out", str(out)])
    assert code == 1


def test_verify_toy_passes(tmp_path, capsys):
    scen = write_scenario(tmp_path, toy_scenario_dict(q="auto", horizon=12.0))
    assert main(["verify", str(scen)]) == 0
    text = capsys.readouterr().out
    assert "verify: PASS" in text


def test_verify_distinguishes_uncertified_q(tmp_path, capsys):
    # operator q below the certified value: envelope checks still run but are
    # reported uncertified, and the run is not failed for it
    scen = write_scenario(tmp_path, toy_scenario_dict(q=2, horizon=12.0))
    assert main(["verify", str(scen)]) == 0
    text = capsys.readouterr().out
    assert "(uncertified)" in text
    assert "oracle equivalence" in text and "PASS" in text


def test_infeasible_plant_is_exit_one(tmp_path):
    data = toy_scenario_dict()
    data["plant"]["C"] = [[[1.0, 0.0]], [[2.0, 0.0]]]  # jointly unobservable
    scen = write_scenario(tmp_path, data)
    assert main(["design", str(scen), "--out", str(tmp_path / "o")]) == 1


def test_async_constancy_refusal_message(tmp_path, capsys):
    data = toy_scenario_dict(q=5)
    data["mode"] = "async"
    data["timing"]["epsilons"] = 0.002
    data["timing"]["delta"] = 0.15
    data["timing"]["beta"] = 0.05
    # switch exactly at a reception-alignment window center in interval 3
    data["graphs"]["ring"] = [[1, 2], [2, 1]]
    bad_time = 2.0 + 2 * 0.15 + 0.05
    data["schedule"] = {"horizon": 6.0,
                        "segments": [[0.0, "full"], [bad_time, "ring"]]}
    scen = write_scenario(tmp_path, data)
    out = tmp_path / "o"
    main(["design", str(scen), "--out", str(out)])
    code = main(["simulate", str(scen), "--cert", str(out / "certificate.json"),
                 "--out", str(out)])
    assert code == 1
    assert "constant" in capsys.readouterr().err


def test_verify_reports_mismatch_growth_on_unstable_plant(tmp_path, capsys):
    data = {
        "schema_version": 1,
        "name": "unstable_mismatch",
        "plant": {
            "A": [[0.1, 0.0], [0.0, 0.2]],
            "C": [[[1.0, 0.0]], [[0.0, 1.0]]],
            "x0": [1.0, -1.0],
        },
        "rate": {"lambda": 0.5, "lambda_bar": 1.5},
        "timing": {"T": 1.0, "q": 10, "delta": "auto", "beta": "auto",
                   "epsilons": [0.05, 0.05], "start_offsets": [0.05, 0.0], "seed": 0},
        "graphs": {"full": [[1, 2], [2, 1]]},
        "schedule": {"horizon": 14.0, "segments": [[0.0, "full"]]},
        "mode": "mismatch",
        "averaging": "straight",
        "events": [],
        "init": {"xhat": [[2.0, 0.0], [0.0, 1.0]], "w": [[0.7], [-0.3]]},
        "output": {"sample_step": 0.05},
    }
    scen = write_scenario(tmp_path, data)
    assert main(["verify", str(scen)]) == 0
    text = capsys.readouterr().out
    assert "growth on unstable plant" in text


def test_resilience_command_table(tmp_path, capsys):
    scen = FIXTURES / "benchmark4_resilience.json"
    assert main(["resilience", str(scen), "--vbar", "1"]) == 0
    text = capsys.readouterr().out
    assert "q* = " in text
    assert text.count("{") >= 5  # four 3-subsets plus the full set
    assert main(["resilience", str(scen), "--vbar", "3"]) == 1


def test_fixture_scenarios_load():
    for name in ("benchmark4_noise", "benchmark4_mismatch", "benchmark4_resilience",
                 "benchmark4_acceptance", "benchmark4_symmetric"):
        scen = load_scenario(FIXTURES / f"{name}.json")
        assert scen.m == 4
        assert scen.plant.n == 4
        assert scen.sha256 == canonical_hash(scen.raw)


def test_noise_fixture_design_and_simulate(tmp_path):
    # published-gain overrides certify, and the forced run reports no
    # envelope numbers (the recursion does not model the forcing)
    scen_path = str(FIXTURES / "benchmark4_noise.json")
    out = tmp_path / "noise"
    assert main(["design", scen_path, "--out", str(out)]) == 0
    cert = json.loads((out / "certificate.json").read_text())
    assert 0.0 <= cert["rho"] < 1.0
    assert 0.0 <= cert["alpha"] < 1.0
    assert cert["q"] == 50
    # the certificate reports both the operator choice and the formula value
    assert cert["q_formula"] > 50
    assert any("below the certified" in note for note in cert["notes"])
    scen = load_scenario(scen_path)
    for i in range(1, 5):
        K = np.asarray(cert["gains"][str(i)])
        dec = scen.decs[i - 1]
        eigs = np.linalg.eigvals(dec.Abar + K @ dec.Cbar)
        assert np.max(eigs.real) <= -2.0 + 1e-8
    assert main(["simulate", scen_path, "--cert", str(out / "certificate.json"),
                 "--out", str(out)]) == 0
    report = json.loads((out / "run_report.json").read_text())
    assert report["bound_violations"] is None
    ev = read_csv_columns(out / "events.csv")
    assert np.all(np.isnan(ev["A_s_norm"]))


def test_report_reproducible_from_csv(tmp_path):
    scen = write_scenario(tmp_path, toy_scenario_dict())
    out = tmp_path / "out"
    main(["design", str(scen), "--out", str(out)])
    main(["simulate", str(scen), "--cert", str(out / "certificate.json"), "--out", str(out)])
    report = json.loads((out / "run_report.json").read_text())
    ev = read_csv_columns(out / "events.csv")
    mask = ~np.isnan(ev["bound_theorem"])
    assert report["bound_violations"] == int(
        np.sum(ev["e_norm"][mask] > ev["bound_theorem"][mask]))


def test_outdir_env_override(tmp_path, monkeypatch):
    scen = write_scenario(tmp_path, toy_scenario_dict())
    monkeypatch.setenv("HYBRIDOBS_OUTDIR", str(tmp_path / "envout"))
    monkeypatch.chdir(tmp_path)
    assert main(["design", str(scen)]) == 0
    assert (tmp_path / "envout" / "toy" / "certificate.json").exists()
