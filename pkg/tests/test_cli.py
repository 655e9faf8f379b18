import csv
import json
import math

import numpy as np
import pytest

from pddsens.bench import ishigami
from pddsens.cli import main
from pddsens.errors import FormatError, IngestionError, ParameterError
from pddsens.gsa import sobol_indices
from pddsens.io import (ProblemConfig, load_model, load_problem_config, read_training_csv,
                        save_model, write_training_csv)
from pddsens.measures import Distribution, sample_design
from pddsens.pdd import PddModel, TrainingSet, enumerate_basis
from pddsens.regress import fit

UPI = {"kind": "uniform", "lower": -math.pi, "upper": math.pi}


def write_config(path, dists, S=2, m=11, **extra):
    path.write_text(json.dumps({"distributions": dists, "S": S, "m": m, **extra}))
    return path


@pytest.fixture
def ishigami_cfg(tmp_path):
    return write_config(tmp_path / "problem.json", [UPI] * 3)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def ishigami_data(tmp_path, M, seed=0, name="train.csv"):
    dists = [Distribution.from_dict(UPI)] * 3
    X = sample_design(dists, M, seed=seed)
    path = tmp_path / name
    write_training_csv(path, X, ishigami(X))
    return path


# -- sample ------------------------------------------------------------------

def test_sample_small(tmp_path, capsys):
    cfg = write_config(tmp_path / "p.json", [{"kind": "uniform", "lower": 0, "upper": 1}] * 2, S=1, m=2)
    out = tmp_path / "d.csv"
    assert main(["sample", "--config", str(cfg), "--samples", "3", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["x1", "x2"] and len(rows) == 4 and all(len(r) == 2 for r in rows)
    assert "3 x 2" in capsys.readouterr().out


def test_sample_reproducible(tmp_path, ishigami_cfg):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["sample", "--config", str(ishigami_cfg), "-n", "59", "--seed", "4",
                     "--out", str(out), "--quiet"]) == 0
    assert a.read_bytes() == b.read_bytes()
    X = np.array(read_csv(a)[1:], dtype=float)
    assert X.shape == (59, 3) and np.abs(X).max() <= math.pi


def test_sample_char_style_design(tmp_path):
    dists = [{"kind": "normal", "mean": 1.0, "std": 0.1}] * 3 + [UPI, UPI]
    cfg = write_config(tmp_path / "char.json", dists, S=2, m=11)
    assert ProblemConfig.from_dict(json.loads(cfg.read_text())).n_terms == 606
    out = tmp_path / "char.csv"
    assert main(["sample", "--config", str(cfg), "-n", "195", "--out", str(out), "--quiet"]) == 0
    X = np.array(read_csv(out)[1:], dtype=float)
    assert X.shape == (195, 5)


def test_sample_unwritable_path(tmp_path, ishigami_cfg):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(["sample", "--config", str(ishigami_cfg), "-n", "5", "--out", str(blocker / "d.csv")])
    assert code == 3


# -- ingestion ---------------------------------------------------------------

DISTS2 = (Distribution.uniform(0, 1), Distribution.normal())


@pytest.mark.parametrize("body,row,fragment", [
    ("x1,x2,y\n0.5,0.1,1\n0.2,0.3\n", 2, "columns"),
    ("x1,x2,y\n0.5,abc,1\n", 1, "non-numeric"),
    ("x1,x2,y\n0.5,0.1,1\n0.5,0.1,1\n1.5,0.1,1\n", 3, "outside"),
    ("x1,x2,y\n0.5,0.1,nan\n", 1, "non-finite"),
    ("x1,x2,y\n0.5,0.1,1,7\n", 1, "columns"),
])
def test_ingestion_rejects_with_row(tmp_path, body, row, fragment):
    p = tmp_path / "d.csv"
    p.write_text(body)
    with pytest.raises(IngestionError, match=fragment) as exc:
        read_training_csv(p, DISTS2)
    assert exc.value.row == row and f"row {row}" in str(exc.value)


@pytest.mark.parametrize("body", ["", "x1,x2,y\n", "a,b,y\n1,2,3\n", "x1,x2\n1,2\n"])
def test_ingestion_rejects_empty_or_bad_header(tmp_path, body):
    p = tmp_path / "d.csv"
    p.write_text(body)
    with pytest.raises(IngestionError):
        read_training_csv(p, DISTS2)


def test_ingestion_accepts_valid_variants(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("﻿x1, x2 ,y\n 0.5 ,-1e3,2.5E-1\n0,0,0\n\n1.0,7,-3\n")
    ts = read_training_csv(p, DISTS2)
    assert ts.inputs.tolist() == [[0.5, -1000.0], [0.0, 0.0], [1.0, 7.0]]
    assert ts.outputs.tolist() == [0.25, 0.0, -3.0]


def test_training_csv_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    X = np.column_stack([rng.random(20), rng.standard_normal(20)])
    y = rng.standard_normal(20) * 1e5
    write_training_csv(tmp_path / "t.csv", X, y)
    ts = read_training_csv(tmp_path / "t.csv", DISTS2)
    assert np.array_equal(ts.inputs, X) and np.array_equal(ts.outputs, y)


# -- config and model files --------------------------------------------------

def test_problem_config_validation(tmp_path):
    with pytest.raises(ParameterError):
        ProblemConfig.from_dict({"distributions": [], "S": 1, "m": 1})
    with pytest.raises(ParameterError):
        ProblemConfig.from_dict({"distributions": [UPI], "S": 2, "m": 3})
    with pytest.raises(ParameterError):
        ProblemConfig.from_dict({"distributions": [UPI, UPI], "S": 2, "m": 1})
    with pytest.raises(ParameterError):
        ProblemConfig.from_dict({"distributions": [UPI], "m": 1})
    p = tmp_path / "bad.json"
    p.write_text("[1, 2")
    with pytest.raises(ParameterError):
        load_problem_config(p)
    cfg = ProblemConfig.from_dict({"distributions": [UPI] * 3, "S": 2, "m": 11,
                                   "regression": {"lambda": 0.3}})
    assert cfg.regression.lam == 0.3 and cfg.n_terms == 199
    assert ProblemConfig.from_dict(cfg.to_dict()) == cfg


def test_model_round_trip_bit_exact(tmp_path):
    dists = (Distribution.from_dict(UPI),) * 3
    X = sample_design(dists, 59, seed=2)
    model, diag = fit(TrainingSet(X, ishigami(X), dists), enumerate_basis(3, 2, 11))
    save_model(tmp_path / "m.json", model, diag)
    back, diag2 = load_model(tmp_path / "m.json")
    assert np.array_equal(back.coefficients, model.coefficients)
    assert back.basis == model.basis and back.distributions == model.distributions
    assert diag2.to_dict() == diag.to_dict()
    assert sobol_indices(back) == sobol_indices(model)


def test_corrupt_model_files(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{")
    with pytest.raises(FormatError):
        load_model(p)
    p.write_text(json.dumps({"format": "pddsens-model", "version": 1, "distributions": [UPI]}))
    with pytest.raises(FormatError):
        load_model(p)
    p.write_text(json.dumps({"format": "something-else"}))
    with pytest.raises(FormatError):
        load_model(p)


# -- fit / analyze -----------------------------------------------------------

def test_fit_overdetermined_residual_zero(tmp_path, capsys):
    cfg = write_config(tmp_path / "p.json", [UPI] * 3, S=2, m=4)
    data = ishigami_data(tmp_path, 80)
    assert main(["fit", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path / "m.json")]) == 0
    out = capsys.readouterr().out
    assert "overdetermined" in out
    _, diag = load_model(tmp_path / "m.json")
    assert diag.method == "least_squares"


def test_fit_underdetermined_announced(tmp_path, ishigami_cfg, capsys):
    data = ishigami_data(tmp_path, 59)
    model_path = tmp_path / "m.json"
    assert main(["fit", "--config", str(ishigami_cfg), "--data", str(data),
                 "--out", str(model_path)]) == 0
    out = capsys.readouterr().out
    assert "underdetermined" in out and "L=199" in out
    _, diag = load_model(model_path)
    assert diag.n_terms == 199 and diag.iterations == 30 and diag.relative_residual < 1e-6


def test_fit_flags_override_config(tmp_path, ishigami_cfg):
    data = ishigami_data(tmp_path, 59)
    assert main(["fit", "--config", str(ishigami_cfg), "--data", str(data), "--out",
                 str(tmp_path / "m.json"), "--iterations", "4", "--lambda", "0.9", "--quiet"]) == 0
    _, diag = load_model(tmp_path / "m.json")
    assert diag.iterations <= 4
    assert main(["fit", "--config", str(ishigami_cfg), "--data", str(data), "--out",
                 str(tmp_path / "l.json"), "--method", "lasso", "--quiet"]) == 0
    assert load_model(tmp_path / "l.json")[1].method == "lasso"


def test_fit_error_exit_codes(tmp_path, ishigami_cfg, capsys):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    assert main(["fit", "--config", str(ishigami_cfg), "--data", str(empty)]) == 3
    bad = tmp_path / "b.csv"
    bad.write_text("x1,x2,x3,y\n0,0,4,1\n")
    assert main(["fit", "--config", str(ishigami_cfg), "--data", str(bad)]) == 3
    assert "row 1" in capsys.readouterr().err
    assert main(["fit", "--config", str(tmp_path / "missing.json"), "--data", str(bad)]) == 3
    bad_cfg = write_config(tmp_path / "bc.json", [UPI], S=2, m=3)
    assert main(["fit", "--config", str(bad_cfg), "--data", str(bad)]) == 1
    assert main(["fit", "--config", str(ishigami_cfg), "--data", str(bad), "--lambda", "4"]) == 1
    assert main(["fit", "--no-such-flag"]) == 1
    # a polynomial that overflows on an extreme but legal normal input
    huge = write_config(tmp_path / "h.json", [{"kind": "normal", "mean": 0, "std": 1}], S=1, m=11)
    far = tmp_path / "far.csv"
    far.write_text("x1,y\n1e300,1\n0,1\n1,2\n")
    assert main(["fit", "--config", str(huge), "--data", str(far)]) == 2


def test_analyze_outputs(tmp_path, ishigami_cfg, capsys):
    data = ishigami_data(tmp_path, 59)
    mp, rp = tmp_path / "m.json", tmp_path / "r.json"
    main(["fit", "--config", str(ishigami_cfg), "--data", str(data), "--out", str(mp), "--quiet"])
    assert main(["analyze", "--model", str(mp), "--out", str(rp), "--quiet"]) == 0
    assert capsys.readouterr().out == ""
    rows = read_csv(tmp_path / "r.csv")
    assert rows[0] == ["name", "value"]
    names = [r[0] for r in rows[1:]]
    assert names[:2] == ["mean", "std"] and "S1,3" in names and "T3" in names
    d = json.loads(rp.read_text())
    assert set(d) >= {"mean", "std", "first_order", "second_order", "total_effect", "trials", "per_trial"}


def test_analyze_round_trip_matches_in_process(tmp_path, ishigami_cfg):
    data = ishigami_data(tmp_path, 59, seed=8)
    mp, rp = tmp_path / "m.json", tmp_path / "r.json"
    main(["fit", "--config", str(ishigami_cfg), "--data", str(data), "--out", str(mp), "--quiet"])
    main(["analyze", "--model", str(mp), "--out", str(rp), "--quiet"])
    dists = (Distribution.from_dict(UPI),) * 3
    ts = read_training_csv(data, dists)
    model, _ = fit(ts, enumerate_basis(3, 2, 11))
    assert json.loads(rp.read_text()) == json.loads(json.dumps(sobol_indices(model).to_dict()))


def test_analyze_dense_ishigami_table_values(tmp_path, ishigami_cfg):
    data = ishigami_data(tmp_path, 2000)
    mp, rp = tmp_path / "m.json", tmp_path / "r.json"
    main(["fit", "--config", str(ishigami_cfg), "--data", str(data), "--out", str(mp), "--quiet"])
    main(["analyze", "--model", str(mp), "--out", str(rp), "--quiet"])
    d = json.loads(rp.read_text())
    assert d["std"] == pytest.approx(3.720832, rel=0.01)
    assert d["first_order"]["1"] == pytest.approx(0.313905, rel=0.01)
    assert d["first_order"]["2"] == pytest.approx(0.442411, rel=0.01)
    assert d["second_order"]["1,3"] == pytest.approx(0.243684, rel=0.01)


def test_analyze_constant_model(tmp_path, capsys):
    basis = enumerate_basis(2, 1, 2)
    c = np.zeros(len(basis))
    c[0] = 3.0
    save_model(tmp_path / "c.json", PddModel(basis, c, (Distribution.uniform(0, 1),) * 2))
    assert main(["analyze", "--model", str(tmp_path / "c.json"), "--out", str(tmp_path / "r.json")]) == 0
    assert "zero variance" in capsys.readouterr().out
    assert json.loads((tmp_path / "r.json").read_text())["degenerate"] is True


def test_analyze_corrupt_model(tmp_path):
    p = tmp_path / "m.json"
    p.write_text('{"format": "pddsens-model", "version": 1}')
    assert main(["analyze", "--model", str(p), "--out", str(tmp_path / "r.json")]) == 3


# -- benchmark ---------------------------------------------------------------

def small_study(tmp_path, **kw):
    study = {"benchmark": "ishigami", "S": 2, "m": 6, "M": [30], "trials": 2,
             "methods": ["dmorph", "lasso"], "lambdas": [0.5], "report_iterations": [0, 3],
             "regression": {"max_iterations": 3}, **kw}
    p = tmp_path / "study.json"
    p.write_text(json.dumps(study))
    return p


def test_benchmark_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["benchmark", "--config", str(small_study(tmp_path, record_trajectory=True)),
                 "--out", str(out)]) == 0
    rows = read_csv(out / "summary.csv")
    assert rows[0][:5] == ["M", "method", "lambda", "iteration", "trials"]
    assert [r[1] for r in rows[1:]] == ["lasso", "dmorph", "dmorph"]
    assert sorted(p.name for p in (out / "trials").iterdir()) == ["M30-trial000.json", "M30-trial001.json"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["trials"] == 2
    traj = read_csv(out / "trajectories.csv")
    assert traj[0] == ["M", "trial", "method", "iteration", "quantity", "value"]
    assert "MRE(std)" in capsys.readouterr().out


def test_benchmark_single_trial_and_overrides(tmp_path):
    out = tmp_path / "out"
    assert main(["benchmark", "--config", str(small_study(tmp_path)), "--out", str(out),
                 "--trials", "1", "--method", "lasso", "--quiet"]) == 0
    rows = read_csv(out / "summary.csv")
    header, row = rows[0], rows[1]
    assert len(rows) == 2 and row[header.index("trials")] == "1"
    trial = json.loads((out / "trials" / "M30-trial000.json").read_text())
    std = trial["reports"]["lasso"]["std"]
    ref = json.loads((out / "summary.json").read_text())["references"]["std"]
    assert float(row[header.index("MRE(std)")]) == pytest.approx(abs(ref - std) / ref, rel=1e-15)


def test_benchmark_is_deterministic(tmp_path):
    cfg = small_study(tmp_path)
    for name in ("a", "b"):
        assert main(["benchmark", "--config", str(cfg), "--out", str(tmp_path / name), "--quiet"]) == 0
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()


def test_benchmark_config_errors(tmp_path):
    assert main(["benchmark", "--preset", "nope", "--quiet"]) == 1
    assert main(["benchmark", "--quiet"]) == 1
    bad = small_study(tmp_path, trials=0)
    assert main(["benchmark", "--config", str(bad), "--quiet"]) == 1
    assert main(["benchmark", "--config", str(tmp_path / "none.json"), "--quiet"]) == 3
