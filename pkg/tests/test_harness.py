import csv
import json
import math
import os

import numpy as np
import pytest

from rotcert import cli as rc_cli
from rotcert import harness as H
from rotcert.errors import ConfigError, ParseError
from rotcert.harness import ExperimentConfig, emit_bound_curves, run


def tiny_config(tmp_path, **overrides):
    base = dict(
        experiment="tls_sweep",
        n=6,
        beta_list=[0.0, 0.3],
        seeds=[0, 1],
        max_iter=20_000,
        out=str(tmp_path),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [(int(s), float(b), m, float(v)) for s, b, m, v in reader]
    return header, rows


# ---------------------------------------------------------------------------
# config plumbing


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig("no_such_experiment")
    with pytest.raises(ConfigError):
        ExperimentConfig("tls_sweep", beta_list=[1.0])
    with pytest.raises(ConfigError):
        ExperimentConfig("tls_sweep", seeds=[])
    with pytest.raises(ConfigError):
        ExperimentConfig("anticon_survey", set_kind="square")


def test_config_from_mapping_parses_strings():
    cfg = ExperimentConfig.from_mapping(
        {
            "experiment": "slides_sweep",
            "n": "12",
            "beta_list": "0.1, 0.5",
            "seeds": "3 4 5",
            "tol": "1e-5",
            "outlier_mode": "consistent",
        }
    )
    assert cfg.n == 12
    assert cfg.beta_list == (0.1, 0.5)
    assert cfg.seeds == (3, 4, 5)
    assert cfg.tol == 1e-5
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"experiment": "tls_sweep", "bogus": "1"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"n": "5"})


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "sweep.cfg"
    path.write_text(
        "# comment line\n"
        "experiment = tls_sweep\n"
        "n = 8   # trailing comment\n"
        "beta_list = 0.2\n"
        "seeds = 0,1\n"
        "\n"
    )
    cfg = H.read_config_file(path)
    assert cfg.experiment == "tls_sweep"
    assert cfg.n == 8 and cfg.beta_list == (0.2,) and cfg.seeds == (0, 1)
    bad = tmp_path / "bad.cfg"
    bad.write_text("experiment tls_sweep\n")
    with pytest.raises(ConfigError):
        H.read_config_file(bad)


# ---------------------------------------------------------------------------
# run() on each experiment, kept tiny


def test_tls_sweep_rows_files_and_percentiles(tmp_path):
    cfg = tiny_config(tmp_path)
    record = run(cfg)
    csv_path = tmp_path / "tls_sweep.csv"
    json_path = tmp_path / "tls_sweep.json"
    assert csv_path.exists() and json_path.exists()

    header, rows = read_rows(csv_path)
    assert header == list(H.CSV_HEADER)
    # one error row and one gap row per (beta, seed) cell
    assert sum(1 for r in rows if r[2] == "error_deg") == 4
    assert sum(1 for r in rows if r[2] == "gap") == 4
    assert all(r[3] == 0.0 for r in rows if r[2] == "failed")

    for pvals in record.aggregates.values():
        finite = [v for v in pvals if math.isfinite(v)]
        assert all(b >= a for a, b in zip(finite, finite[1:]))

    data = json.loads(json_path.read_text())
    assert data["config"]["experiment"] == "tls_sweep"
    assert any(a["metric"] == "error_deg" for a in data["aggregates"])


def test_tls_sweep_replay_is_bit_identical(tmp_path):
    # identical up to wall-clock rows, which measure the machine, not the run
    first = run(tiny_config(tmp_path / "a"))
    second = run(tiny_config(tmp_path / "b"))
    strip = lambda rows: [r for r in rows if "walltime" not in r[2]]
    assert strip(first.rows) == strip(second.rows)


def test_worker_pool_matches_sequential(tmp_path):
    seq = run(tiny_config(tmp_path / "seq", beta_list=[0.3], seeds=[0, 1]))
    par = run(
        tiny_config(tmp_path / "par", beta_list=[0.3], seeds=[0, 1], workers=2)
    )
    strip = lambda rows: [r for r in rows if "walltime" not in r[2]]
    assert strip(seq.rows) == strip(par.rows)


def test_failed_cells_are_recorded_not_raised(tmp_path):
    cfg = tiny_config(tmp_path, outlier_mode="multi:0", beta_list=[0.4], seeds=[0])
    record = run(cfg)
    assert record.rows == [(0, 0.4, "failed", 1.0)]


def test_aposteriori_bounds_metrics(tmp_path):
    cfg = tiny_config(
        tmp_path, experiment="aposteriori_bounds", n=10, beta_list=[0.2], seeds=[0]
    )
    record = run(cfg)
    metrics = record.metrics()
    for name in ("error_vec", "bound_dj", "bound_J", "trivial_bound", "gap"):
        assert name in metrics
    assert record.values("trivial_bound") == [pytest.approx(2.0 * math.sqrt(3.0))]
    err = record.values("error_vec")[0]
    bj = record.values("bound_J")[0]
    assert err <= bj


def test_hyper_survey_split_verdicts(tmp_path):
    cfg = tiny_config(
        tmp_path,
        experiment="hyper_survey",
        n=20,
        beta_list=[0.0],
        seeds=[0],
        c2_list=[1.0, 6.0],
    )
    record = run(cfg)
    assert record.values("holds_c2_1") == [0.0]
    assert record.values("holds_c2_6") == [1.0]


def test_anticon_survey_witness_fail(tmp_path):
    # beta=0.9 puts the certificate in its witness regime: quick, no SDP
    cfg = tiny_config(
        tmp_path,
        experiment="anticon_survey",
        n=10,
        beta_list=[0.9],
        seeds=[0],
        eta=3.75,
    )
    record = run(cfg)
    assert record.values("holds") == [0.0]
    assert math.isfinite(record.values("condition2_bound")[0])


def test_multi_rotation_metrics(tmp_path):
    cfg = tiny_config(
        tmp_path,
        experiment="multi_rotation",
        n=8,
        beta_list=[0.5],
        seeds=[0],
        outlier_mode="consistent",
        max_iter=30_000,
    )
    record = run(cfg)
    metrics = record.metrics()
    assert "list_error_rot0" in metrics and "list_error_rot1" in metrics
    assert record.values("all_within_5deg")[0] in (0.0, 1.0)


# ---------------------------------------------------------------------------
# bound curves


@pytest.fixture(scope="module")
def curves(tmp_path_factory):
    path = tmp_path_factory.mktemp("bounds") / "curves.csv"
    emit_bound_curves(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [(name, float(x), float(v)) for name, x, v in reader]
    assert header == ["curve", "x", "value"]
    return rows


def test_bound_curves_apriori_spot_values(curves):
    at_one = [v for name, x, v in curves if name == "apriori_lts_mc" and x == 1.0]
    assert at_one == [pytest.approx(0.005)]
    trivial = {v for name, _, v in curves if name == "trivial"}
    assert trivial == {2.0}


def test_bound_curves_eta_threshold_spots(curves):
    pts = {x: v for name, x, v in curves if name == "eta_threshold"}
    for alpha, expected in [(0.55, 1.32), (0.6, 2.22), (0.8, 3.75)]:
        close = min(pts, key=lambda x: abs(x - alpha))
        assert abs(close - alpha) < 0.006
        assert pts[close] == pytest.approx(expected, abs=0.01)


def test_bound_curves_terminate_at_beta_max(curves):
    beta_max = {
        name[: -len("_beta_max")]: x
        for name, x, v in curves
        if name.endswith("_beta_max")
    }
    assert len(beta_max) == 16
    assert beta_max["lts_k4_C6"] == pytest.approx(1.0 / (6.0 * 2.0**11))
    for name, x, _ in curves:
        for stem, bmax in beta_max.items():
            if name in (stem + "_c1", stem + "_c2"):
                assert x < bmax


# ---------------------------------------------------------------------------
# CLI


def test_cli_gen_and_load_round_trip(tmp_path):
    out = tmp_path / "pairs.csv"
    code = rc_cli.cli(
        ["gen", "--n", "12", "--beta", "0.25", "--seed", "3", "--out", str(out)]
    )
    assert code == 0
    inst = rc_cli.load_pairs(out)
    assert inst.n == 12
    assert inst.labels is not None and inst.labels.count(0) == 9
    with pytest.raises(ParseError):
        rc_cli.load_pairs(__file__)


def test_cli_conflicting_flags_name_both(tmp_path, capsys):
    out = tmp_path / "pairs.csv"
    rc_cli.cli(["gen", "--n", "6", "--beta", "0.0", "--out", str(out)])
    capsys.readouterr()
    code = rc_cli.cli(["solve-tls", "--input", str(out), "--n", "10"])
    captured = capsys.readouterr()
    assert code == 2
    assert "--input" in captured.err and "--n" in captured.err


def test_cli_solve_tls_synthetic_summary(capsys):
    code = rc_cli.cli(
        ["solve-tls", "--n", "6", "--beta", "0.0", "--seed", "1",
         "--max-iter", "20000"]
    )
    captured = capsys.readouterr()
    assert code == 0
    line = captured.out.strip()
    assert line.startswith("solve-tls:")
    for token in ("error=", "gap=", "selected="):
        assert token in line


def test_cli_solve_slides_from_input_has_no_truth(tmp_path, capsys):
    pairs = tmp_path / "pairs.csv"
    rc_cli.cli(["gen", "--n", "8", "--beta", "0.0", "--seed", "2",
                "--out", str(pairs)])
    capsys.readouterr()
    code = rc_cli.cli(
        ["solve-slides", "--input", str(pairs), "--alpha", "0.5",
         "--max-iter", "20000"]
    )
    captured = capsys.readouterr()
    assert code == 0
    body = captured.out.split("\n", 1)[1]
    payload = json.loads(body)
    assert payload["n"] == 8
    assert all("error_deg" not in entry for entry in payload["entries"])


def test_cli_check_hyper_verdict(capsys):
    assert rc_cli.cli(["check-hyper", "--n", "10", "--c2", "6", "--seed", "0"]) == 0
    assert capsys.readouterr().out.startswith("Holds")
    assert rc_cli.cli(["check-hyper", "--n", "10", "--c2", "1", "--seed", "0"]) == 0
    assert capsys.readouterr().out.startswith("Fails")


def test_cli_check_anticon_verdict(capsys):
    code = rc_cli.cli(
        ["check-anticon", "--mode", "triplet", "--n", "10", "--eta", "3.75",
         "--beta", "0.9", "--seed", "0"]
    )
    assert code == 0
    assert capsys.readouterr().out.startswith("Fails")


def test_cli_bounds_writes_file(tmp_path, capsys):
    code = rc_cli.cli(["bounds", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "bound_curves.csv").exists()


def test_cli_run_with_flags(tmp_path, capsys):
    code = rc_cli.cli(
        ["run", "tls_sweep", "--n", "6", "--beta", "0.2", "--seed", "3",
         "--max-iter", "15000", "--out", str(tmp_path)]
    )
    captured = capsys.readouterr()
    assert code == 0
    assert "tls_sweep" in captured.out
    assert (tmp_path / "tls_sweep.csv").exists()


def test_cli_run_with_config_file(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        "experiment = tls_sweep\nn = 6\nbeta_list = 0.2\nseeds = 4\n"
        f"max_iter = 15000\nout = {tmp_path}\n"
    )
    assert rc_cli.cli(["run", str(cfg)]) == 0
    assert (tmp_path / "tls_sweep.csv").exists()


def test_cli_run_unknown_experiment(capsys):
    code = rc_cli.cli(["run", "frob_sweep"])
    captured = capsys.readouterr()
    assert code == 2
    assert "frob_sweep" in captured.err
