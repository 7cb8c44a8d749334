"""End-to-end command line behavior: files written, exit codes, determinism."""

import json

import numpy as np
import pytest

from ctiv import Dataset, save_csv
from ctiv.cli import EXIT_DATA, EXIT_ESTIMATION, EXIT_OK, EXIT_USAGE, main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_trial_csv(path, n=900, seed=70, full_compliance=True):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    z = rng.integers(0, 2, n).astype(np.int8)
    if full_compliance:
        w = z
    else:
        w = ((0.8 * z + 0.5 * rng.normal(size=n)) > 0.4).astype(np.int8)
    y = rng.normal(size=n) + 0.4 * x[:, 0] + w * (1.0 + 2.0 * (x[:, 1] > 0))
    ds = Dataset(covariates=x, z=z, w=w, y=y, feature_names=("x1", "x2"))
    save_csv(ds, path)
    return ds


def test_simulate_deterministic(tmp_path, capsys):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    for out in (a, b):
        code, _, err = run(capsys, "simulate", "--design", "2", "--n", "400",
                           "--seed", "9", "--out", str(out))
        assert code == EXIT_OK, err
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().count("\n") == 401
    meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
    assert meta["design_id"] == 2 and meta["n"] == 400
    assert "realized_cor_wz" in meta
    assert (tmp_path / "a.csv.meta.json").read_bytes() == \
        (tmp_path / "b.csv.meta.json").read_bytes()


def test_simulate_scenario(tmp_path, capsys):
    out = tmp_path / "s2.csv"
    code, _, _ = run(capsys, "simulate", "--scenario", "2", "--n", "300",
                     "--seed", "1", "--out", str(out))
    assert code == EXIT_OK
    meta = json.loads((tmp_path / "s2.csv.meta.json").read_text())
    assert meta["scenario"] == 2 and meta["design_id"] == 2
    # scenario 1 lowers the instrument-strength target
    code, _, _ = run(capsys, "simulate", "--scenario", "1", "--n", "300",
                     "--seed", "1", "--out", str(tmp_path / "s1.csv"))
    assert code == EXIT_OK
    meta1 = json.loads((tmp_path / "s1.csv.meta.json").read_text())
    assert meta1["target_cor_wz"] == 0.5


def test_simulate_design_and_scenario_conflict(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "--design", "2", "--scenario", "1",
                       "--n", "100", "--out", str(tmp_path / "x.csv"))
    assert code == EXIT_USAGE
    assert json.loads(err)["error"] == "UsageError"


def test_fit_writes_outputs(tmp_path, capsys):
    data = tmp_path / "d1.csv"
    run(capsys, "simulate", "--design", "1", "--n", "1200", "--seed", "3",
        "--out", str(data))
    out = tmp_path / "fit"
    code, stdout, err = run(capsys, "fit", "--input", str(data),
                            "--regime", "iv-randomized",
                            "--features", "x1",
                            "--out-dir", str(out), "--seed", "3")
    assert code == EXIT_OK, err
    for name in ("tree.json", "tree.dot", "leaf_report.csv", "run.json"):
        assert (out / name).exists()
    tree = json.loads((out / "tree.json").read_text())
    assert tree["format"] == "ctiv-tree"
    run_cfg = json.loads((out / "run.json").read_text())
    assert run_cfg["resolved"]["n_leaves"] >= 1
    assert "overall CACE" in stdout
    header = (out / "leaf_report.csv").read_text().splitlines()[0]
    assert header == "node_id,n,itt_hat,pi_c_hat,cace_hat,cace_se,first_stage_f"


def test_fit_rerun_byte_identical(tmp_path, capsys):
    data = tmp_path / "d.csv"
    write_trial_csv(data, full_compliance=False)
    outs = []
    for sub in ("one", "two"):
        out = tmp_path / sub
        code, _, err = run(capsys, "fit", "--input", str(data),
                           "--regime", "iv-unconfounded",
                           "--out-dir", str(out), "--seed", "5")
        assert code == EXIT_OK, err
        outs.append(out)
    for name in ("tree.json", "tree.dot", "leaf_report.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    # run.json echoes the differing --out-dir; everything else matches
    configs = [json.loads((o / "run.json").read_text()) for o in outs]
    for cfg in configs:
        cfg["options"].pop("out_dir")
    assert configs[0] == configs[1]


def test_fit_full_compliance_regimes_match(tmp_path, capsys):
    data = tmp_path / "fc.csv"
    write_trial_csv(data, full_compliance=True)
    payloads = {}
    for regime in ("ct", "iv-unconfounded"):
        out = tmp_path / regime
        code, _, err = run(capsys, "fit", "--input", str(data),
                           "--regime", regime, "--no-tsls-covariates",
                           "--out-dir", str(out), "--seed", "5")
        assert code == EXIT_OK, err
        payloads[regime] = json.loads((out / "tree.json").read_text())["tree"]
        report = (out / "leaf_report.csv").read_text().splitlines()[1:]
        for line in report:
            fields = line.split(",")
            itt, pi_c, cace = (float(fields[2]), float(fields[3]),
                               float(fields[4]))
            assert pi_c == 1.0
            assert cace == itt
    assert payloads["ct"] == payloads["iv-unconfounded"]


def test_fit_missing_column_exit_data(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("y,w,x1\n1.0,1,0.2\n2.0,0,-0.1\n")
    code, _, err = run(capsys, "fit", "--input", str(bad),
                       "--regime", "iv-randomized",
                       "--out-dir", str(tmp_path / "o"))
    assert code == EXIT_DATA
    assert "z" in json.loads(err)["message"]


def test_fit_growth_failure_exit_estimation(tmp_path, capsys):
    data = tmp_path / "tiny.csv"
    write_trial_csv(data, n=60, full_compliance=False)
    code, _, err = run(capsys, "fit", "--input", str(data),
                       "--regime", "iv-randomized", "--min-arm-count", "50",
                       "--out-dir", str(tmp_path / "o"))
    assert code == EXIT_ESTIMATION
    assert json.loads(err)["error"] == "GrowthError"


def test_usage_errors(tmp_path, capsys):
    code, _, err = run(capsys, "fit", "--regime", "iv-randomized")
    assert code == EXIT_USAGE
    assert json.loads(err)["error"] == "UsageError"
    code, _, err = run(capsys, "bench", "--designs", "9",
                       "--out-dir", str(tmp_path))
    assert code == EXIT_USAGE
    data = tmp_path / "d.csv"
    write_trial_csv(data, n=100, full_compliance=False)
    code, _, err = run(capsys, "fit", "--input", str(data),
                       "--regime", "iv-randomized",
                       "--train-frac", "0.7", "--val-frac", "0.7",
                       "--out-dir", str(tmp_path))
    assert code == EXIT_USAGE
    # a missing input file is a data problem, not a usage problem
    code, _, err = run(capsys, "fit", "--input", str(tmp_path / "nope.csv"),
                       "--regime", "iv-randomized",
                       "--out-dir", str(tmp_path))
    assert code == EXIT_DATA


def test_predict_round_trip(tmp_path, capsys):
    data = tmp_path / "d2.csv"
    run(capsys, "simulate", "--design", "2", "--n", "1500", "--seed", "8",
        "--out", str(data))
    fit_dir = tmp_path / "fit"
    features = ",".join(f"x{i}" for i in range(1, 11))
    code, _, err = run(capsys, "fit", "--input", str(data),
                       "--regime", "iv-randomized", "--features", features,
                       "--out-dir", str(fit_dir), "--seed", "8")
    assert code == EXIT_OK, err
    preds = tmp_path / "preds.csv"
    code, stdout, err = run(capsys, "predict", "--tree", str(fit_dir / "tree.json"),
                            "--input", str(data), "--output", str(preds))
    assert code == EXIT_OK, err
    lines = preds.read_text().splitlines()
    assert lines[0] == "leaf_id,itt_hat,cace_hat,cace_se"
    assert len(lines) == 1501
    # every row's numbers equal its leaf's report entry
    report = {}
    for line in (fit_dir / "leaf_report.csv").read_text().splitlines()[1:]:
        f = line.split(",")
        report[f[0]] = (f[2], f[4], f[5])
    for line in lines[1:]:
        leaf_id, itt, cace, se = line.split(",")
        assert (itt, cace, se) == report[leaf_id]


def test_predict_header_only_input(tmp_path, capsys):
    data = tmp_path / "d1.csv"
    run(capsys, "simulate", "--design", "1", "--n", "800", "--seed", "2",
        "--out", str(data))
    fit_dir = tmp_path / "fit"
    run(capsys, "fit", "--input", str(data), "--regime", "iv-randomized",
        "--features", "x1", "--out-dir", str(fit_dir), "--seed", "2")
    empty = tmp_path / "empty.csv"
    empty.write_text("x1\n")
    out = tmp_path / "preds.csv"
    code, stdout, _ = run(capsys, "predict", "--tree", str(fit_dir / "tree.json"),
                          "--input", str(empty), "--output", str(out))
    assert code == EXIT_OK
    assert out.read_text() == "leaf_id,itt_hat,cace_hat,cace_se\n"
    assert "0 predictions" in stdout


def test_predict_feature_mismatch(tmp_path, capsys):
    data = tmp_path / "d1.csv"
    run(capsys, "simulate", "--design", "1", "--n", "800", "--seed", "2",
        "--out", str(data))
    fit_dir = tmp_path / "fit"
    run(capsys, "fit", "--input", str(data), "--regime", "iv-randomized",
        "--features", "x1", "--out-dir", str(fit_dir), "--seed", "2")
    wrong = tmp_path / "wrong.csv"
    wrong.write_text("a,b\n1.0,2.0\n")
    code, _, err = run(capsys, "predict", "--tree", str(fit_dir / "tree.json"),
                       "--input", str(wrong), "--output", str(tmp_path / "p.csv"))
    assert code == EXIT_DATA
    assert "x1" in json.loads(err)["message"]


def test_bench_small_run(tmp_path, capsys):
    out = tmp_path / "bench"
    code, stdout, err = run(capsys, "bench", "--designs", "2", "--sizes", "300",
                            "--seeds", "1", "--out-dir", str(out))
    assert code == EXIT_OK, err
    rows = (out / "results.csv").read_text().splitlines()
    assert len(rows) == 2  # header plus one cell
    assert "Rel. gap %" in (out / "summary.txt").read_text()
    run_cfg = json.loads((out / "run.json").read_text())
    assert run_cfg["resolved"]["n_cells"] == 1
    assert run_cfg["resolved"]["n_failures"] == 0
    # byte-stable on rerun
    out2 = tmp_path / "bench2"
    run(capsys, "bench", "--designs", "2", "--sizes", "300", "--seeds", "1",
        "--out-dir", str(out2))
    assert (out / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()
    assert (out / "summary.txt").read_bytes() == (out2 / "summary.txt").read_bytes()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["--version"])
    assert excinfo.value.code == 0
