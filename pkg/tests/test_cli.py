import csv
import json
import shutil
from pathlib import Path

import pytest

from peergrade.cli import digest, main

GOLDEN = Path(__file__).parent / "data" / "golden10"

# frozen from one pipeline run on the golden class with golden10/config.toml
GOLDEN_MAP = "45443444444454443434433455444244453454345444454455435455443443444534454434454444"
GOLDEN_RELIABILITY = {"st0000": 1.6646666666666663, "st0001": 1.831666666666667,
                      "st0002": 0.37400000000000017, "st0003": 0.8593333333333336}
GOLDEN_DISAGREEMENT = 0.075


@pytest.fixture
def golden(tmp_path):
    """Private copy so tests can check that inputs are left untouched."""
    dst = tmp_path / "golden"
    shutil.copytree(GOLDEN, dst)
    return dst


def snapshot(path: Path) -> dict[str, bytes]:
    return {str(p.relative_to(path)): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def manifest(path: Path, drop_timings=True) -> dict:
    doc = json.loads((path / "manifest.json").read_text())
    if drop_timings:
        doc.pop("timings")
    return doc


def run_infer(golden, out, *extra):
    return main(["infer", "--data", str(golden / "data.csv"), "--config",
                 str(golden / "config.toml"), "--out", str(out), *extra])


# ------------------------------------------------------------------- usage

def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "simulate" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["infer", "--data", "x", "--out", "y", "--bogus"],
                                  ["simulate"]])
def test_usage_errors_exit_two(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_input_exits_two(tmp_path):
    assert main(["infer", "--data", str(tmp_path / "none.csv"), "--out", str(tmp_path / "o")]) == 2


def test_invalid_config_exits_two(golden, tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[model]\nchians = 2\n")
    code = main(["infer", "--data", str(golden / "data.csv"), "--config", str(bad),
                 "--out", str(tmp_path / "o")])
    assert code == 2 and "chians" in capsys.readouterr().err


def test_internal_error_exits_one(golden, tmp_path, monkeypatch):
    import peergrade.cli as cli

    def boom(*args, **kwargs):
        raise RuntimeError("boom")
    monkeypatch.setattr(cli, "infer", boom)
    assert run_infer(golden, tmp_path / "o") == 1


# ---------------------------------------------------------------- simulate

def test_simulate_is_byte_identical(tmp_path):
    spec = GOLDEN / "spec.toml"
    for d in ("a", "b"):
        assert main(["simulate", "--spec", str(spec), "--out", str(tmp_path / d)]) == 0
    a, b = snapshot(tmp_path / "a"), snapshot(tmp_path / "b")
    a.pop("manifest.json"), b.pop("manifest.json")
    assert a == b
    assert manifest(tmp_path / "a") == manifest(tmp_path / "b")


def test_simulate_reproduces_golden_dataset(tmp_path):
    assert main(["simulate", "--spec", str(GOLDEN / "spec.toml"), "--out", str(tmp_path)]) == 0
    for name in ("data.csv", "data.meta.json", "truth.json"):
        assert digest(tmp_path / name) == digest(GOLDEN / name), name


def test_simulate_seed_flag_overrides_spec(tmp_path):
    main(["simulate", "--spec", str(GOLDEN / "spec.toml"), "--out", str(tmp_path / "a"), "--seed", "5"])
    assert digest(tmp_path / "a" / "data.csv") != digest(GOLDEN / "data.csv")
    assert manifest(tmp_path / "a")["seed"] == 5


# ------------------------------------------------------------------- infer

def test_infer_golden(golden, tmp_path):
    before = snapshot(golden)
    assert run_infer(golden, tmp_path / "run") == 0
    assert snapshot(golden) == before  # inputs untouched
    with (tmp_path / "run" / "summary.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    grades = [r for r in rows if r["kind"] == "true_grade"]
    assert len(grades) == 20 * 4
    assert len(rows) == 20 * 4 + 3 * 11
    assert "".join(r["map_grade"] for r in grades) == GOLDEN_MAP
    rel = {r["id"]: float(r["mean"]) for r in rows if r["kind"] == "reliability"}
    for grader, value in GOLDEN_RELIABILITY.items():
        assert rel[grader] == pytest.approx(value, rel=1e-12)

    doc = manifest(tmp_path / "run", drop_timings=False)
    assert {"command", "config_hash", "seed", "inputs", "outputs", "timings"} <= set(doc)
    assert doc["seed"] == 7 and doc["command"] == "infer"
    assert doc["inputs"]["data.csv"] == digest(golden / "data.csv")
    for out in doc["outputs"]:
        assert (tmp_path / "run" / out).exists()
    assert set(doc["outputs"]) == {"summary.csv", "config.toml", "traces/"}


def test_infer_is_byte_identical(golden, tmp_path):
    for d in ("a", "b"):
        assert run_infer(golden, tmp_path / d, "--seed", "3") == 0
    a, b = snapshot(tmp_path / "a"), snapshot(tmp_path / "b")
    a.pop("manifest.json"), b.pop("manifest.json")
    assert a == b
    assert manifest(tmp_path / "a") == manifest(tmp_path / "b")


def test_infer_thread_count_does_not_change_results(golden, tmp_path):
    run_infer(golden, tmp_path / "a", "--no-traces")
    run_infer(golden, tmp_path / "b", "--no-traces", "--threads", "2")
    assert digest(tmp_path / "a" / "summary.csv") == digest(tmp_path / "b" / "summary.csv")


def test_infer_without_seed_records_drawn_seed(golden, tmp_path):
    cfg = tmp_path / "noseed.toml"
    cfg.write_text("[model]\nchains = 1\nsamples = 20\nburn_in = 5\n")
    assert main(["infer", "--data", str(golden / "data.csv"), "--config", str(cfg),
                 "--out", str(tmp_path / "o"), "--no-traces"]) == 0
    seed = manifest(tmp_path / "o")["seed"]
    assert isinstance(seed, int)
    assert main(["infer", "--data", str(golden / "data.csv"), "--config", str(cfg),
                 "--out", str(tmp_path / "p"), "--no-traces", "--seed", str(seed)]) == 0
    assert digest(tmp_path / "o" / "summary.csv") == digest(tmp_path / "p" / "summary.csv")


def test_infer_model_flags_reach_config(golden, tmp_path):
    assert run_infer(golden, tmp_path / "o", "--no-effort", "--no-censoring", "--no-traces") == 0
    text = (tmp_path / "o" / "config.toml").read_text()
    assert "effort_enabled = false" in text and "censoring_enabled = false" in text


# ----------------------------------------------------------------- explain

def test_explain_golden(golden, tmp_path, capsys):
    run_infer(golden, tmp_path / "run", "--no-traces")
    args = ["explain", "--summary", str(tmp_path / "run" / "summary.csv"),
            "--data", str(golden / "data.csv")]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    doc = json.loads((tmp_path / "a" / "explanations.json").read_text())
    assert len(doc["submissions"]) == 20
    assert doc["disagreement"] == pytest.approx(GOLDEN_DISAGREEMENT, abs=1e-12)
    assert digest(tmp_path / "a" / "explanations.json") == digest(tmp_path / "b" / "explanations.json")
    assert manifest(tmp_path / "a") == manifest(tmp_path / "b")
    assert "explained 20 submissions" in capsys.readouterr().out


def test_explain_rejects_mismatched_summary(golden, tmp_path):
    run_infer(golden, tmp_path / "run", "--no-traces")
    spec = tmp_path / "spec.toml"
    spec.write_text("[class]\nstudents = 12\nweeks = 2\n")
    main(["simulate", "--spec", str(spec), "--out", str(tmp_path / "sim")])
    other = tmp_path / "sim" / "data.csv"
    assert main(["explain", "--summary", str(tmp_path / "run" / "summary.csv"), "--data", str(other),
                 "--out", str(tmp_path / "x")]) == 2


@pytest.mark.parametrize("flag", [["--T", "0"], ["--S", "-1"]])
def test_explain_bad_constants(golden, tmp_path, flag):
    run_infer(golden, tmp_path / "run", "--no-traces")
    assert main(["explain", "--summary", str(tmp_path / "run" / "summary.csv"), "--data",
                 str(golden / "data.csv"), "--out", str(tmp_path / "x"), *flag]) == 2


# -------------------------------------------------------------- xval, experiment

def test_xval_is_byte_identical(golden, tmp_path, capsys):
    cfg = tmp_path / "x.toml"
    cfg.write_text("[model]\nchains = 1\nsamples = 40\nburn_in = 10\n")
    for d in ("a", "b"):
        assert main(["xval", "--data", str(golden / "data.csv"), "--config", str(cfg), "--k", "3",
                     "--seed", "4", "--out", str(tmp_path / d)]) == 0
    assert digest(tmp_path / "a" / "xval.csv") == digest(tmp_path / "b" / "xval.csv")
    assert manifest(tmp_path / "a") == manifest(tmp_path / "b")
    out = capsys.readouterr().out
    assert out.count("fold ") == 6 and "total:" in out
    rows = (tmp_path / "a" / "xval.csv").read_text().splitlines()
    assert rows[0] == "fold,heldout_loglik,groups" and len(rows) == 4


def test_experiment_is_byte_identical(tmp_path):
    spec = tmp_path / "spec.toml"
    spec.write_text("[class]\nstudents = 8\nweeks = 1\ntas = 1\nta_coverage = 0.25\n")
    cfg = tmp_path / "c.toml"
    cfg.write_text("[model]\nchains = 1\nsamples = 15\nburn_in = 5\n")
    for d in ("a", "b"):
        assert main(["experiment", "--kind", "misspec", "--knob", "mu_s", "--settings", "4,3",
                     "--replicates", "1", "--spec", str(spec), "--config", str(cfg), "--seed", "2",
                     "--out", str(tmp_path / d)]) == 0
    assert digest(tmp_path / "a" / "results.csv") == digest(tmp_path / "b" / "results.csv")
    assert manifest(tmp_path / "a") == manifest(tmp_path / "b")


def test_experiment_misspec_without_knob(tmp_path):
    assert main(["experiment", "--kind", "misspec", "--replicates", "1", "--settings", "3"]) == 2
