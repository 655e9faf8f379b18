"""Command-line front end: ``pddsens {sample,fit,analyze,benchmark}``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure, 3 I/O
or data-format error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import __version__
from .bench import StudyConfig, run_study
from .errors import (AssetError, FormatError, IngestionError, NumericError,
                     ParameterError, PddError, ShapeError)
from .gsa import sobol_indices
from .io import (load_model, load_problem_config, read_json, save_model, save_report,
                 write_design_csv, write_json, write_rows)
from .measures import sample_design
from .pdd import enumerate_basis
from .regress import METHODS, fit

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("pddsens")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would collide with the numeric code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _say(args, *parts):
    if not args.quiet:
        print(*parts)


def _problem(args):
    if not args.config:
        raise ParameterError("--config is required")
    return load_problem_config(args.config)


def _regression(args, cfg):
    kw = {}
    if args.lam is not None:
        kw["lam"] = args.lam
    if args.iterations is not None:
        kw["max_iterations"] = args.iterations
    return replace(cfg, **kw) if kw else cfg


def cmd_sample(args) -> int:
    problem = _problem(args)
    if args.samples is None or args.samples < 1:
        raise ParameterError("--samples must be a positive integer")
    X = sample_design(problem.distributions, args.samples, seed=args.seed, method=args.sampling)
    out = args.out or problem.outputs.get("design", "design.csv")
    write_design_csv(out, X)
    _say(args, f"wrote {X.shape[0]} x {X.shape[1]} design ({args.sampling}, seed {args.seed}) to {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    from .io import read_training_csv

    problem = _problem(args)
    if not args.data:
        raise ParameterError("--data is required")
    cfg = _regression(args, problem.regression)
    ts = read_training_csv(args.data, problem.distributions)
    basis = enumerate_basis(problem.dims, problem.S, problem.m)
    model, diag = fit(ts, basis, cfg, method=args.method, seed=args.seed)
    out = args.out or problem.outputs.get("model", "model.json")
    save_model(out, model, diag)
    _say(args, f"path: {diag.path} (M={diag.n_samples}, L={diag.n_terms}, rank={diag.rank})")
    _say(args, f"method: {diag.method}"
         + (f", lasso penalty {diag.lasso_penalty:.6g}" if diag.lasso_penalty is not None else "")
         + (f", {diag.iterations} iterations" if diag.method == "dmorph" else ""))
    _say(args, f"residual: {diag.residual_norm:.3e} (relative {diag.relative_residual:.3e})")
    _say(args, f"model written to {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    if not args.model:
        raise ParameterError("--model is required")
    model, _ = load_model(args.model)
    report = sobol_indices(model)
    out = Path(args.out or "report.json")
    csv_path = out.with_suffix(".csv")
    save_report(report, out, csv_path)
    if report.degenerate:
        _say(args, "warning: the model has zero variance; all indices are reported as 0")
    for name, value in report.table_rows():
        _say(args, f"{name:>10s}  {value: .6f}")
    _say(args, f"report written to {out} and {csv_path}")
    return EXIT_OK


def _load_preset(name: str) -> dict:
    fname = name if name.endswith(".json") else name + ".json"
    res = resources.files("pddsens").joinpath("presets", fname)
    if not res.is_file():
        avail = sorted(p.name[:-5] for p in resources.files("pddsens").joinpath("presets").iterdir()
                       if p.name.endswith(".json"))
        raise ParameterError(f"unknown preset {name!r}; available: {', '.join(avail)}")
    import json
    return json.loads(res.read_text())


def study_config_from_args(args) -> StudyConfig:
    if args.preset and args.config:
        raise ParameterError("give either --preset or --config, not both")
    if args.preset:
        raw = _load_preset(args.preset)
    elif args.config:
        raw = read_json(args.config)
    else:
        raise ParameterError("--config or --preset is required")
    cfg = StudyConfig.from_dict(raw)
    kw = {}
    if args.trials is not None:
        kw["trials"] = args.trials
    if args.seed is not None:
        kw["seed_base"] = args.seed
    if args.lam is not None:
        kw["lambdas"] = (args.lam,)
    if args.iterations is not None:
        kw["report_iterations"] = tuple(i for i in cfg.report_iterations if i < args.iterations) + (args.iterations,)
    if args.workers is not None:
        kw["workers"] = args.workers
    if args.method is not None and args.method != "auto":
        kw["methods"] = (args.method,)
    return replace(cfg, **kw) if kw else cfg


def _fmt(v, spec=".6f"):
    return "" if v is None else (format(v, spec) if isinstance(v, float) else str(v))


def cmd_benchmark(args) -> int:
    cfg = study_config_from_args(args)
    out = Path(args.out or "study")
    result = run_study(cfg)
    out.mkdir(parents=True, exist_ok=True)

    cols = result.summary_columns()
    rows = [[r[c] for c in cols] for r in result.summary]
    write_rows(out / "summary.csv", cols, rows)
    write_json(out / "summary.json", result.to_dict())
    for t in result.trials:
        write_json(out / "trials" / f"M{t.M}-trial{t.trial:03d}.json", t.to_dict())
    if cfg.record_trajectory:
        traj_rows = []
        for t in result.trials:
            for label, series in t.trajectories.items():
                names = list(series)
                for it in range(len(series[names[0]])):
                    traj_rows.extend([t.M, t.trial, label, it, n, series[n][it]] for n in names)
        write_rows(out / "trajectories.csv", ["M", "trial", "method", "iteration", "quantity", "value"],
                   traj_rows)

    _say(args, f"{cfg.benchmark}: S={cfg.S}, m={cfg.m}, trials={cfg.trials}")
    labels = ["M", "method", "lambda", "iteration"] + cols[5:]
    widths = [max(len(h), 10) for h in labels]
    _say(args, "  ".join(h.rjust(w) for h, w in zip(labels, widths)))
    for r in result.summary:
        head = [str(r["M"]), r["method"], _fmt(r["lambda"], "g"), _fmt(r["iteration"])]
        vals = head + [_fmt(r[c]) for c in cols[5:]]
        _say(args, "  ".join(v.rjust(w) for v, w in zip(vals, widths)))
    _say(args, f"results written to {out}/")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pddsens", description="Sparse D-MORPH PDD surrogates for global sensitivity analysis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="problem (or study) JSON file")
        sp.add_argument("--out", help="output path")
        sp.add_argument("--quiet", action="store_true", help="suppress the stdout summary")
        sp.add_argument("-v", "--verbose", action="store_true", help="log solver progress to stderr")

    def regression(sp):
        sp.add_argument("--lambda", dest="lam", type=float, help="weight of the Lasso target (default 0.5)")
        sp.add_argument("--iterations", type=int, help="sparse D-MORPH iterations (default 30)")

    sp = sub.add_parser("sample", help="write a design of input points to CSV")
    common(sp)
    sp.add_argument("--samples", "-n", type=int, help="number of points M")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sampling", choices=("lhs", "mc"), default="lhs")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("fit", help="fit a PDD surrogate to x1..xN,y data")
    common(sp)
    regression(sp)
    sp.add_argument("--data", help="training CSV")
    sp.add_argument("--method", choices=METHODS, default="auto")
    sp.add_argument("--seed", type=int, default=0, help="seed of the Lasso cross-validation folds")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("analyze", help="sensitivity report of a saved model")
    common(sp)
    sp.add_argument("--model", help="model JSON written by 'fit'")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("benchmark", help="run a replicated benchmark study")
    common(sp)
    regression(sp)
    sp.add_argument("--preset", help="built-in study: ishigami-study or oakley-study")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int, help="seed_base override")
    sp.add_argument("--method", choices=("ls", "lasso", "dmorph"), help="run only this method")
    sp.add_argument("--workers", type=int, help="worker processes for the trials")
    sp.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help, --version
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (IngestionError, FormatError, AssetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ParameterError, ShapeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PddError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
