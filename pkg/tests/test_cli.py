import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from medcross.cli import EXIT_IO, EXIT_LEARNER, EXIT_USER, main
from medcross.domain import read_csv

FAST_GRID = '{"depth": 1, "width": 8, "epochs": 10}'


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def case1(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--case", 1, "--n", 2000, "--seed", 3, "--out", out) == 0
    return out


def test_simulate_writes_table_and_sidecar(tmp_path):
    assert run("simulate", "--case", 1, "--n", 1000, "--p", 5, "--seed", 7, "--out", tmp_path) == 0
    with open(tmp_path / "data.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["X1", "X2", "X3", "X4", "X5", "D", "M", "Y"]
    assert len(rows) == 1001 and all(len(r) == 8 for r in rows)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["args"]["seed"] == 7
    assert "out" not in manifest["args"]


def test_simulate_is_byte_identical(tmp_path):
    for sub in ("a", "b"):
        run("simulate", "--case", 1, "--n", 1000, "--seed", 7, "--out", tmp_path / sub)
    for name in ("data.csv", "data.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sidecar_records_alpha_and_truths(tmp_path):
    run("simulate", "--case", 3, "--n", 200, "--alpha", 1.2, "--out", tmp_path)
    side = json.loads((tmp_path / "data.json").read_text())
    assert side["scenario"]["alpha"] == 1.2
    assert side["truth"]["total"] == 0.4
    assert all(side["truth"][k] == 0.2 for k in ("nde0", "nde1", "nie0", "nie1"))


def test_oracle_estimate_lands_in_sampling_band(case1, tmp_path):
    code = run("estimate", "--input", case1 / "data.csv", "--mediator", "continuous",
               "--learner", "oracle", "--out", tmp_path)
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    truth = json.loads((case1 / "data.json").read_text())["truth"]
    assert set(report["effects"]) == {"total", "nde0", "nde1", "nie0", "nie1"}
    for name, entry in report["effects"].items():
        assert abs(entry["estimate"] - truth[name]) < 4 * entry["se"]
        assert entry["V"] == 5 and entry["learner"] == "oracle" and entry["n"] == 2000
        lo, hi = entry["ci95"]
        assert lo <= entry["estimate"] <= hi
    assert (tmp_path / "report.txt").read_text().startswith("effect")


def test_linear_validation_losses_exceed_dnn_on_case2(tmp_path):
    run("simulate", "--case", 2, "--n", 2000, "--seed", 5, "--out", tmp_path / "sim")
    grid = tmp_path / "grid.json"
    grid.write_text('{"depth": 2, "width": 50, "epochs": 60}')
    common = ["--input", tmp_path / "sim" / "data.csv", "--mediator", "continuous"]
    assert run("estimate", *common, "--learner", "linear", "--out", tmp_path / "lin") == 0
    assert run("estimate", *common, "--learner", "dnn", "--grid", grid, "--out", tmp_path / "dnn") == 0
    lin = json.loads((tmp_path / "lin" / "report.json").read_text())
    dnn = json.loads((tmp_path / "dnn" / "report.json").read_text())
    assert lin["nuisance_validation_loss"]["mu"] > dnn["nuisance_validation_loss"]["mu"]
    assert set(dnn["selected_specs"]) == {"a_x", "a_xm", "mu", "cross_mu_d0", "cross_mu_d1"}


def test_integer_mediator_through_continuous_path(tmp_path):
    rng = np.random.default_rng(2)
    n = 600
    x = rng.normal(size=(n, 2))
    d = rng.integers(0, 2, n)
    m = rng.poisson(1 + d)
    y = 0.3 * d + 0.5 * m + x[:, 0] + rng.normal(size=n)
    path = tmp_path / "priors.csv"
    with open(path, "w") as fh:
        fh.write("age,priors_count,D,M,Y\n")
        for row in zip(x[:, 0], x[:, 1], d, m, y):
            fh.write(",".join(str(v) for v in row) + "\n")
    assert run("estimate", "--input", path, "--mediator", "continuous", "--learner", "linear",
               "--out", tmp_path / "out") == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert set(report["effects"]) == {"total", "nde1", "nde0", "nie1", "nie0"}


def test_binary_mediator_estimate(tmp_path):
    rng = np.random.default_rng(3)
    n = 500
    path = tmp_path / "b.csv"
    d = rng.integers(0, 2, n)
    m = (rng.uniform(size=n) < 0.3 + 0.3 * d).astype(int)
    y = d + m + rng.normal(size=n)
    with open(path, "w") as fh:
        fh.write("X1,D,M,Y\n")
        for row in zip(rng.normal(size=n), d, m, y):
            fh.write(",".join(str(v) for v in row) + "\n")
    assert run("estimate", "--input", path, "--mediator", "binary", "--learner", "linear",
               "--out", tmp_path / "out") == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert "f_m" in report["nuisance_validation_loss"]


def test_tune_sample_pins_specs(case1, tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text('{"depth": 1, "width": [4, 8], "epochs": 5}')
    run("simulate", "--case", 1, "--n", 300, "--seed", 99, "--out", tmp_path / "tune")
    code = run("estimate", "--input", case1 / "data.csv", "--mediator", "continuous",
               "--grid", grid, "--tune-sample", tmp_path / "tune" / "data.csv",
               "--out", tmp_path / "out")
    assert code == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert all(s["width"] in (4, 8) for s in report["selected_specs"].values())


def test_invalid_flags_exit_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        run("simulate", "--case", 9, "--n", 100, "--out", tmp_path)
    assert info.value.code == EXIT_USER
    with pytest.raises(SystemExit) as info:
        run("estimate", "--input", "x.csv", "--mediator", "continuous", "--v-folds", 11, "--out", tmp_path)
    assert info.value.code == EXIT_USER
    assert run("simulate", "--case", 1, "--n", 50, "--out", tmp_path) == EXIT_USER


def test_invalid_data_exit_2(tmp_path):
    (tmp_path / "bad.csv").write_text("X1,D,M,Y\n0.1,2,0.5,1\n" + "0.2,1,0.1,2\n" * 20)
    assert run("estimate", "--input", tmp_path / "bad.csv", "--mediator", "continuous",
               "--learner", "linear", "--out", tmp_path / "o") == EXIT_USER
    (tmp_path / "bin.csv").write_text("X1,D,M,Y\n" + "0.1,1,0.5,1\n0.2,0,1,2\n" * 10)
    assert run("estimate", "--input", tmp_path / "bin.csv", "--mediator", "binary",
               "--learner", "linear", "--out", tmp_path / "o") == EXIT_USER


def test_missing_input_exit_3(tmp_path):
    assert run("estimate", "--input", tmp_path / "nope.csv", "--mediator", "continuous",
               "--learner", "linear", "--out", tmp_path / "o") == EXIT_IO


def test_unwritable_output_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("simulate", "--case", 1, "--n", 100, "--out", blocker / "sub") == EXIT_IO


def test_learner_failure_exit_4(tmp_path):
    (tmp_path / "one_arm.csv").write_text("X1,D,M,Y\n" + "".join(f"{i},1,{i},{2 * i}\n" for i in range(30)))
    assert run("estimate", "--input", tmp_path / "one_arm.csv", "--mediator", "continuous",
               "--learner", "linear", "--out", tmp_path / "o") == EXIT_LEARNER


def test_oracle_without_sidecar_is_user_error(tmp_path, case1):
    data = read_csv(case1 / "data.csv")
    assert data.n == 2000
    (tmp_path / "copy.csv").write_bytes((case1 / "data.csv").read_bytes())
    assert run("estimate", "--input", tmp_path / "copy.csv", "--mediator", "continuous",
               "--learner", "oracle", "--out", tmp_path / "o") == EXIT_USER
    assert run("estimate", "--input", tmp_path / "copy.csv", "--mediator", "continuous",
               "--learner", "oracle", "--sidecar", case1 / "data.json", "--out", tmp_path / "o") == 0


def test_single_replicate_exit_2(tmp_path):
    assert run("benchmark", "--case", 1, "--n", 500, "--replicates", 1, "--out", tmp_path) == EXIT_USER


def test_benchmark_oracle_coverage(tmp_path):
    assert run("benchmark", "--case", 1, "--n", 2000, "--replicates", 100, "--learner", "oracle",
               "--seed", 1000, "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "benchmark.json").read_text())
    row = next(r for r in doc["rows"] if r["effect"] == "total")
    assert 0.88 <= row["cp"] <= 0.99
    assert doc["truth"]["total"] == 0.4
    assert "Bias" in (tmp_path / "benchmark.txt").read_text()


def test_parallelism_does_not_change_bytes(tmp_path):
    args = ["benchmark", "--case", 1, "--n", 300, "--replicates", 4, "--learner", "oracle,linear"]
    assert run(*args, "--parallelism", 1, "--out", tmp_path / "p1") == 0
    assert run(*args, "--parallelism", 8, "--out", tmp_path / "p8") == 0
    for name in ("benchmark.json", "benchmark.txt"):
        assert (tmp_path / "p1" / name).read_bytes() == (tmp_path / "p8" / name).read_bytes()


def test_parallelism_default_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("MEDCROSS_THREADS", "3")
    run("benchmark", "--case", 1, "--n", 200, "--replicates", 2, "--out", tmp_path)
    assert json.loads((tmp_path / "manifest.json").read_text())["args"]["parallelism"] == 3


def test_replay_reproduces_bytes(case1, tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(FAST_GRID)
    assert run("estimate", "--input", case1 / "data.csv", "--mediator", "continuous",
               "--grid", grid, "--seed", 4, "--out", tmp_path / "first") == 0
    assert run("replay", tmp_path / "first" / "manifest.json", "--out", tmp_path / "again") == 0
    for name in ("report.json", "report.txt", "manifest.json"):
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_replay_of_missing_manifest(tmp_path):
    assert run("replay", tmp_path / "none.json", "--out", tmp_path) == EXIT_USER


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "medcross.cli", "simulate", "--case", "5",
                           "--n", "100", "--p", "3", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "data.csv").exists()
