"""End to end runs of the command line interface, checked through main()."""

import json
from pathlib import Path

import pytest

from seqopt.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
TWO_CHANNEL = str(CONFIGS / "two_channel.json")
SYMMETRIC = str(CONFIGS / "symmetric.json")
UNINFORMATIVE = str(CONFIGS / "uninformative.json")


def run(capsys, *argv: str) -> tuple[int, Path]:
    code = main(list(argv))
    captured = capsys.readouterr()
    run.err = captured.err
    out = captured.out.strip().splitlines()
    return code, Path(out[-1]) if out else Path()


def test_solve_truncated(tmp_path, capsys):
    code, out_dir = run(
        capsys, "--out-root", str(tmp_path), "solve", TWO_CHANNEL, "--horizon", "2"
    )
    assert code == 0
    assert out_dir.name.startswith("solve-")
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["q0"] == pytest.approx(0.256, abs=1e-12)
    assert summary["l0"] == pytest.approx(0.5)
    assert summary["horizon"] == 2
    assert summary["take_observations"] is True
    assert summary["report"]["n_psi"] == pytest.approx(1.55, abs=1e-12)
    assert summary["report"]["error_probs"] == pytest.approx([0.36, 0.09], abs=1e-12)
    assert (out_dir / "values.csv").exists()
    assert (out_dir / "rule.csv").exists()


def test_manifest_and_determinism(tmp_path, capsys):
    argv = ("--out-root", str(tmp_path), "solve", TWO_CHANNEL, "--horizon", "3")
    code1, dir1 = run(capsys, *argv)
    first = {f.name: f.read_bytes() for f in dir1.iterdir()}
    code2, dir2 = run(capsys, *argv)
    assert code1 == code2 == 0
    assert dir1 == dir2
    for f in dir2.iterdir():
        assert f.read_bytes() == first[f.name]

    manifest = json.loads((dir1 / "manifest.json").read_text())
    assert set(manifest) == {"command", "config_sha256", "parameters", "version", "outputs"}
    assert manifest["command"] == "solve"
    assert manifest["outputs"] == sorted(manifest["outputs"])
    assert len(manifest["config_sha256"]) == 64


def test_solve_limit_mode(tmp_path, capsys):
    code, out_dir = run(
        capsys, "--out-root", str(tmp_path), "solve", UNINFORMATIVE, "--limit"
    )
    assert code == 0
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["converged"] is True
    assert summary["q0"] == pytest.approx(0.55, abs=1e-12)
    assert summary["take_observations"] is False


def test_evaluate_round_trip(tmp_path, capsys):
    _, solve_dir = run(
        capsys, "--out-root", str(tmp_path), "solve", TWO_CHANNEL, "--horizon", "2"
    )
    code, ev_dir = run(
        capsys,
        "--out-root", str(tmp_path),
        "evaluate", TWO_CHANNEL,
        "--rule", str(solve_dir / "rule.csv"),
    )
    assert code == 0
    report = json.loads((ev_dir / "report.json").read_text())
    summary = json.loads((solve_dir / "summary.json").read_text())
    assert report == summary["report"]
    assert (ev_dir / "report.csv").exists()


def test_search_lagrange(tmp_path, capsys):
    code, out_dir = run(
        capsys,
        "--out-root", str(tmp_path),
        "search", TWO_CHANNEL,
        "--targets", "0.18,0.045",
        "--horizon", "2",
    )
    assert code == 0
    result = json.loads((out_dir / "result.json").read_text())
    lag = result["lagrange"]
    assert lag["converged"] is True
    assert lag["achieved"] == pytest.approx([0.18, 0.045], abs=1e-9)
    assert lag["n_psi"] == pytest.approx(1.55, abs=1e-9)
    header = (out_dir / "trace.csv").read_text().splitlines()[0]
    assert header == "lam_0,lam_1,achieved_0,achieved_1,n_psi,gamma"
    assert (out_dir / "rule.csv").exists()


def test_search_sprt(tmp_path, capsys):
    code, out_dir = run(
        capsys,
        "--out-root", str(tmp_path),
        "search", TWO_CHANNEL,
        "--targets", "0.3,0.3",
        "--mode", "sprt",
        "--cap", "40",
        "--conservative",
    )
    assert code == 0
    result = json.loads((out_dir / "result.json").read_text())
    assert result["sprt"]["alpha"] <= 0.3 + 1e-12
    assert result["sprt"]["beta"] <= 0.3 + 1e-12
    assert (out_dir / "rule.csv").exists()


def test_search_compare(tmp_path, capsys):
    code, out_dir = run(
        capsys,
        "--out-root", str(tmp_path),
        "search", TWO_CHANNEL,
        "--targets", "0.18,0.045",
        "--horizon", "2",
        "--cap", "25",
        "--compare",
    )
    assert code == 0
    lines = (out_dir / "comparison.csv").read_text().splitlines()
    assert lines[0] == "method,alpha,beta,n_psi,e_tau_theta1,e_tau_theta2"
    rows = {ln.split(",")[0]: ln.split(",") for ln in lines[1:]}
    assert set(rows) == {"lagrange", "sprt"}
    # like for like: the ratio test was matched to the optimal rule's errors
    assert float(rows["sprt"][1]) <= float(rows["lagrange"][1]) + 1e-12
    assert float(rows["sprt"][2]) <= float(rows["lagrange"][2]) + 1e-12
    assert (out_dir / "sprt_rule.csv").exists()


def test_simulate_deterministic(tmp_path, capsys):
    _, solve_dir = run(
        capsys, "--out-root", str(tmp_path), "solve", TWO_CHANNEL, "--horizon", "2"
    )
    argv = (
        "--out-root", str(tmp_path),
        "simulate", TWO_CHANNEL,
        "--rule", str(solve_dir / "rule.csv"),
        "--reps", "4000",
        "--seed", "11",
    )
    code, sim_dir = run(capsys, *argv)
    assert code == 0
    first = (sim_dir / "estimates.json").read_bytes()
    run(capsys, *argv)
    assert (sim_dir / "estimates.json").read_bytes() == first
    est = json.loads(first)
    assert abs(est["tau"]["mean"] - 1.55) <= 4 * est["tau"]["se"]


def test_simulate_trace(tmp_path, capsys):
    _, solve_dir = run(
        capsys, "--out-root", str(tmp_path), "solve", TWO_CHANNEL, "--horizon", "2"
    )
    code, sim_dir = run(
        capsys,
        "--out-root", str(tmp_path),
        "simulate", TWO_CHANNEL,
        "--rule", str(solve_dir / "rule.csv"),
        "--reps", "50",
        "--seed", "3",
        "--trace",
    )
    assert code == 0
    assert len((sim_dir / "trace.csv").read_text().splitlines()) == 51


def test_simulate_cap_hits_flag(tmp_path, capsys):
    rule = tmp_path / "never.csv"
    rule.write_text(
        "engine,stage,state,stop_prob\n"
        "counts,1,0|1,0.0\n"
        "counts,1,1|0,0.0\n"
    )
    code, sim_dir = run(
        capsys,
        "--out-root", str(tmp_path),
        "simulate", TWO_CHANNEL,
        "--rule", str(rule),
        "--reps", "200",
        "--seed", "1",
        "--cap", "1",
    )
    assert code == 5
    est = json.loads((sim_dir / "estimates.json").read_text())
    assert est["cap_hit_fraction"] == 1.0
    assert est["flagged"] is True


def test_exit_code_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{\"schema_version\": 1}")
    code, _ = run(capsys, "--out-root", str(tmp_path), "solve", str(bad))
    assert code == 2
    assert "error:" in run.err


def test_exit_code_missing_file(tmp_path, capsys):
    code, _ = run(capsys, "--out-root", str(tmp_path), "solve", str(tmp_path / "nope.json"))
    assert code == 2


def test_exit_code_bad_targets(tmp_path, capsys):
    code, _ = run(
        capsys,
        "--out-root", str(tmp_path),
        "search", TWO_CHANNEL,
        "--targets", "0.1,zap",
    )
    assert code == 2


def test_exit_code_infeasible(tmp_path, capsys):
    code, _ = run(
        capsys,
        "--out-root", str(tmp_path),
        "search", TWO_CHANNEL,
        "--targets", "0.6,0.6",
        "--horizon", "2",
    )
    assert code == 3


def test_exit_code_unreachable_sprt(tmp_path, capsys):
    code, _ = run(
        capsys,
        "--out-root", str(tmp_path),
        "search", TWO_CHANNEL,
        "--targets", "0.000001,0.000001",
        "--mode", "sprt",
        "--cap", "5",
        "--conservative",
    )
    assert code == 3


def test_exit_code_budget(tmp_path, capsys):
    code, _ = run(
        capsys,
        "--out-root", str(tmp_path),
        "solve", TWO_CHANNEL,
        "--horizon", "25",
        "--engine", "tree",
    )
    assert code == 4


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "seqopt" in capsys.readouterr().out
