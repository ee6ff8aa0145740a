import json

import numpy as np
import pytest

from dtebounds import write_csv
from dtebounds.cli import main
from tests.conftest import make_repair_dataset


def run_cli(args):
    return main(args)


def test_simulate_then_bounds_round_trip(tmp_path, capsys):
    csv = tmp_path / "sim.csv"
    code = run_cli(
        ["simulate", "--a", "0.8", "--b", "0.2", "--n", "4000", "--grid-k", "40",
         "--seed", "7", "--output", str(csv)]
    )
    assert code == 0
    sidecar = json.loads((tmp_path / "sim.csv.truths.json").read_text())
    assert sidecar["true_theta"] == pytest.approx(0.5, abs=1e-9)
    assert sidecar["exact_intervals"]["combined"] == [pytest.approx(0.3), pytest.approx(0.7)]
    assert sidecar["exact_intervals"]["experimental"] == [0.0, 1.0]

    report_path = tmp_path / "report.json"
    code = run_cli(["bounds", "--input", str(csv), "--psi", "fraction-benefit",
                    "--output", str(report_path)])
    assert code == 0
    report = json.loads(report_path.read_text())
    comb = report["intervals"]["combined"]
    exp = report["intervals"]["experimental"]
    assert exp["lower"] - 1e-9 <= comb["lower"] <= comb["upper"] <= exp["upper"] + 1e-9
    assert comb["lower"] == pytest.approx(0.3, abs=0.06)
    assert comb["upper"] == pytest.approx(0.7, abs=0.06)
    assert report["width_reduction_pct"] > 0
    table = capsys.readouterr().out
    assert "width reduction" in table


def test_simulate_roy_sidecar(tmp_path):
    csv = tmp_path / "roy.csv"
    code = run_cli(["simulate", "--a", "1", "--b", "0", "--n", "100", "--grid-k", "20",
                    "--output", str(csv)])
    assert code == 0
    sidecar = json.loads((tmp_path / "roy.csv.truths.json").read_text())
    assert sidecar["exact_intervals"]["combined"] == [pytest.approx(0.5), pytest.approx(0.5)]


def test_simulate_rejects_bad_parameters(tmp_path):
    assert run_cli(["simulate", "--n", "0", "--output", str(tmp_path / "x.csv")]) == 2
    assert run_cli(["simulate", "--a", "0.6", "--b", "0.2", "--n", "10",
                    "--output", str(tmp_path / "y.csv")]) == 2


def test_bounds_exit_2_on_bad_config(tmp_path, capsys):
    csv = tmp_path / "sim.csv"
    run_cli(["simulate", "--n", "500", "--grid-k", "10", "--output", str(csv)])
    code = run_cli(["bounds", "--input", str(csv), "--population", "s=1",
                    "--regime", "experimental"])
    assert code == 2
    body = json.loads(capsys.readouterr().out)
    assert body["error"]["type"] == "ValidationError"


def test_bounds_exit_3_on_overlap_failure(tmp_path, capsys):
    p = tmp_path / "no_obs_treated.csv"
    p.write_text("y,d,g\n1,1,exp\n2,0,exp\n3,0,obs\n")
    code = run_cli(["bounds", "--input", str(p)])
    assert code == 3
    body = json.loads(capsys.readouterr().out)
    assert body["error"]["type"] == "OverlapError"


def test_bounds_exit_4_on_infeasible_restrictions(tmp_path, capsys):
    from dtebounds import block_uniform_population, discretize_population, population_dataset

    anti_roy = discretize_population(block_uniform_population(0.0, 1.0), k=6)
    csv = tmp_path / "anti.csv"
    write_csv(population_dataset(anti_roy), csv)
    code = run_cli(["bounds", "--input", str(csv), "--grm"])
    assert code == 4
    body = json.loads(capsys.readouterr().out)
    assert body["error"]["type"] == "InfeasibleModelError"


def test_bounds_subpopulation_and_assumptions(tmp_path):
    csv = tmp_path / "sim.csv"
    run_cli(["simulate", "--n", "2500", "--grid-k", "8", "--seed", "3", "--output", str(csv)])
    out = tmp_path / "r.json"
    code = run_cli(["bounds", "--input", str(csv), "--psi", "fraction-harmed",
                    "--population", "s=1", "--regime", "combined", "--msi",
                    "--output", str(out)])
    assert code == 0
    report = json.loads(out.read_text())
    iv = report["intervals"]["combined"]
    assert iv["regime"] == "combined-lp"
    assert 0.0 <= iv["lower"] <= iv["upper"] <= 1.0


def test_check_command(tmp_path):
    csv = tmp_path / "sim.csv"
    run_cli(["simulate", "--n", "2000", "--grid-k", "20", "--seed", "2", "--output", str(csv)])
    out = tmp_path / "check.json"
    assert run_cli(["check", "--input", str(csv), "--output", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["overlap"]["passed"] is True
    assert "descriptive only" in report["balance"]["note"]
    assert report["gain"]["verdict"] in ("gain-predicted", "no-gain-predicted")


def test_check_command_overlap_failure(tmp_path):
    p = tmp_path / "broken.csv"
    p.write_text("y,d,g\n1,1,exp\n2,0,exp\n3,0,obs\n")
    out = tmp_path / "check.json"
    assert run_cli(["check", "--input", str(p), "--output", str(out)]) == 3
    report = json.loads(out.read_text())
    assert report["overlap"]["passed"] is False
    assert report["overlap"]["failing"]


def test_report_byte_identical_across_runs(tmp_path):
    csv = tmp_path / "sim.csv"
    run_cli(["simulate", "--n", "1500", "--grid-k", "15", "--seed", "9", "--output", str(csv)])
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert run_cli(["bounds", "--input", str(csv), "--output", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.json"
    assert run_cli(["bounds", "--input", str(csv), "--threads", "4", "--output", str(c)]) == 0
    assert a.read_bytes() == c.read_bytes()


def test_oracle_command_passes_and_bug_hook_fails(tmp_path, capsys):
    out = tmp_path / "oracle.json"
    assert run_cli(["oracle", "--seed", "1", "--output", str(out)]) == 0
    report = json.loads(out.read_text())
    assert all(s["passed"] for s in report["suites"].values())
    assert all(s["max_deviation"] < 1e-6 for s in report["suites"].values())
    capsys.readouterr()
    assert run_cli(["oracle", "--seed", "1", "--inject-bug", "--output", str(out)]) == 1
    report = json.loads(out.read_text())
    assert not all(s["passed"] for s in report["suites"].values())


def test_oracle_seed_changes_instances_not_verdicts(tmp_path):
    out1, out2 = tmp_path / "o1.json", tmp_path / "o2.json"
    assert run_cli(["oracle", "--seed", "1", "--output", str(out1)]) == 0
    assert run_cli(["oracle", "--seed", "2", "--output", str(out2)]) == 0
    r1 = json.loads(out1.read_text())
    r2 = json.loads(out2.read_text())
    assert [s["passed"] for s in r1["suites"].values()] == [True, True, True]
    assert [s["passed"] for s in r2["suites"].values()] == [True, True, True]


def test_x_marginal_flag(tmp_path):
    csv = tmp_path / "d.csv"
    csv.write_text(
        "y,d,g,x\n" + "\n".join(
            f"{i % 5},{d},{g},{c}"
            for i, (d, g, c) in enumerate(
                [(d, g, c) for c in ("a", "b") for d in (0, 1) for g in ("exp", "obs")] * 4
            )
        ) + "\n"
    )
    marg = tmp_path / "m.csv"
    marg.write_text("x,p\na,0.9\nb,0.1\n")
    out = tmp_path / "r.json"
    assert run_cli(["bounds", "--input", str(csv), "--x-marginal", str(marg),
                    "--output", str(out)]) == 0
    report = json.loads(out.read_text())
    assert set(report["intervals"]["combined"]["per_cell"]) == {
        "s=0,x=a", "s=1,x=a", "s=0,x=b", "s=1,x=b",
    }
