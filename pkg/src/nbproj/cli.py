"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, baselines, harness, opnb
from .data import read_table
from .exceptions import DataError, DimensionMismatch, DimensionTooLow, NBProjError, NumericalError
from .persist import ScaledClassifier, load_model, save_model
from .pipeline import PreprocessConfig, preprocess, read_preprocessed, write_preprocessed
from .scaling import apply_scaling, fit_scaling

log = logging.getLogger("nbproj")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
PENALTIES = {"frobenius": "frobenius", "total-cov": "total_covariance",
             "within-cov": "within_class_covariance"}
FIT_METHODS = ("opnb", "nb", "lda", "rda", "kdda")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _label(value: str):
    return int(value) if value.lstrip("-").isdigit() else value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nbproj", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nbproj {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", help="apply the preprocessing policy to a raw CSV")
    p.add_argument("csv_in")
    p.add_argument("csv_out")
    p.add_argument("--label-col", type=_label, default="target")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--delimiter", default=",")

    p = sub.add_parser("fit", help="fit a classifier to a preprocessed CSV")
    p.add_argument("train_csv")
    p.add_argument("model_out")
    p.add_argument("--method", required=True, choices=FIT_METHODS)
    p.add_argument("--label-col", type=_label, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="OPNB penalty strength or RDA mixing weight")
    p.add_argument("--penalty", choices=sorted(PENALTIES), default="frobenius")
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--bins", type=int, default=1000, help="0 disables binning")
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--init", choices=("pca", "random"), default="pca")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.3)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--tune", action="store_true", help="choose hyperparameters by CV")
    p.add_argument("--folds", type=int, default=5)

    p = sub.add_parser("predict", help="predict labels and posteriors")
    p.add_argument("model")
    p.add_argument("csv_in")
    p.add_argument("out")
    p.add_argument("--label-col", type=_label, default="target")

    p = sub.add_parser("benchmark", help="run the evaluation protocol over a CSV corpus")
    p.add_argument("corpus_dir")
    p.add_argument("out_dir")
    p.add_argument("--methods", default="opnb,nb,lda,rda,kdda")
    p.add_argument("--label-col", type=_label, default=None)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--train-frac", type=float, default=0.75)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--penalty", choices=sorted(PENALTIES), default="frobenius")
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--bins", type=int, default=1000)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="fix the OPNB penalty instead of tuning it")

    p = sub.add_parser("stats", help="dataset statistics and regression on benchmark results")
    p.add_argument("corpus_dir")
    p.add_argument("out")
    p.add_argument("--label-col", type=_label, default=None)
    p.add_argument("--summary", default=None, help="summary.json from a benchmark run")
    p.add_argument("--method", default="opnb")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("project", help="export projected points and a decision-region lattice")
    p.add_argument("model")
    p.add_argument("csv_in")
    p.add_argument("out_prefix")
    p.add_argument("--label-col", type=_label, default="target")
    p.add_argument("--dims", default="1,2")
    p.add_argument("--grid", type=int, default=100)
    return parser


def _write_sidecar(path: Path, args, **extra) -> None:
    doc = {"tool": "nbproj", "version": __version__, "command": args.command,
           "config": {k: v for k, v in vars(args).items() if k != "func"}}
    doc.update(extra)
    Path(str(path) + ".json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_preprocess(args) -> int:
    covariates, labels = read_table(args.csv_in, args.label_col, header=not args.no_header,
                                    delimiter=args.delimiter)
    label_name = labels.name if isinstance(labels.name, str) else "target"
    ds, report = preprocess(covariates, labels, PreprocessConfig(seed=args.seed),
                            name=Path(args.csv_in).stem)
    report["tool"] = "nbproj"
    report["version"] = __version__
    write_preprocessed(ds, report, args.csv_out, label_col=label_name)
    dropped = report["steps"][2]["dropped_columns"]
    print(f"n={ds.n} p_before={report['p_input']} p_after={ds.p} K={ds.n_classes} "
          f"dropped_columns={dropped}")
    return EXIT_OK


def _opnb_config(args) -> opnb.OPNBConfig:
    return opnb.OPNBConfig(
        dim=getattr(args, "dim", None),
        lam=args.lam if args.lam is not None else 1e-3,
        penalty_mode=PENALTIES[args.penalty],
        init=getattr(args, "init", "pca"),
        seed=args.seed,
        n_restarts=args.restarts,
        binning=args.bins > 0,
        bins=max(args.bins, 2),
        max_iterations=getattr(args, "max_iter", 200),
    )


def _baseline_params(args) -> dict:
    if args.method in ("nb", "kdda"):
        return {"alpha": args.alpha, "gamma": args.gamma}
    if args.method == "lda":
        return {"r": args.r}
    if args.method == "rda":
        return {"lam": 0.5 if args.lam is None else args.lam}
    return {}


def cmd_fit(args) -> int:
    ds = read_preprocessed(args.train_csv, args.label_col)
    extra = {"cli": {"method": args.method, "seed": args.seed, "version": __version__}}
    if args.method == "opnb":
        cfg = _opnb_config(args)
        if args.tune:
            methods = harness.make_methods(cfg)
            cv = harness.cross_validate(methods["opnb"], methods["opnb"].candidates(ds), ds,
                                        args.folds, seed=args.seed)
            cfg = opnb.OPNBConfig(**{**harness._config_kwargs(cfg), **cv.best})
            extra["cli"]["cv"] = {"best": cv.best, "errors": cv.errors.tolist()}
        model = opnb.fit(ds, cfg)
        extra["cli"]["config"] = cfg.echo()
        print(f"opnb: objective={model.objective:.6g} iterations={model.n_iter} "
              f"converged={model.converged}")
    else:
        params = _baseline_params(args)
        scales = fit_scaling(ds.X)
        scaled = replace(ds, X=apply_scaling(ds.X, scales))
        if args.tune:
            method = harness.make_methods()[args.method]
            cv = harness.cross_validate(method, method.candidates(ds), ds, args.folds,
                                        seed=args.seed)
            params = cv.best
            extra["cli"]["cv"] = {"best": cv.best, "errors": cv.errors.tolist()}
        fitter = {"nb": baselines.fit_nb, "lda": baselines.fit_lda, "rda": baselines.fit_rda,
                  "kdda": baselines.fit_kdda}[args.method]
        model = ScaledClassifier(fitter(scaled, **params), scales.sd, tuple(ds.label_names))
        extra["cli"]["config"] = params
        print(f"{args.method}: fitted with {params}")
    save_model(model, args.model_out, extra)
    return EXIT_OK


def _covariates_for(model, csv_in, label_col):
    frame = pd.read_csv(csv_in, float_precision="round_trip")
    frame.columns = [str(c) for c in frame.columns]
    if isinstance(label_col, str) and label_col in frame.columns:
        frame = frame.drop(columns=[label_col])
    elif isinstance(label_col, int):
        frame = frame.drop(columns=[frame.columns[label_col]])
    p = model.V.shape[0] if isinstance(model, opnb.TrainedOPNBModel) else model.column_scales.shape[0]
    if frame.shape[1] != p:
        raise DimensionMismatch(f"model expects p={p} covariates, found p={frame.shape[1]}")
    bad = [c for c in frame.columns if not pd.api.types.is_numeric_dtype(frame[c])]
    if bad:
        raise DataError(f"non-numeric columns {bad}")
    return frame.to_numpy(dtype=float)


def _decode(model, codes):
    names = tuple(model.label_names) or tuple(range(1, len(codes) + 1))
    return [names[int(c) - 1] for c in codes]


def cmd_predict(args) -> int:
    model = load_model(args.model)
    X = _covariates_for(model, args.csv_in, args.label_col)
    post = model.posterior(X)
    pred = np.argmax(post, axis=1) + 1
    names = tuple(model.label_names) or tuple(range(1, post.shape[1] + 1))
    out = pd.DataFrame({"predicted": [names[k - 1] for k in pred]})
    for k, name in enumerate(names):
        out[f"p_{name}"] = post[:, k]
    out.to_csv(args.out, index=False, lineterminator="\n", float_format="%.17g")
    _write_sidecar(Path(args.out), args, model_kind=model.kind)
    return EXIT_OK


def _load_corpus(corpus_dir, label_col):
    paths = sorted(Path(corpus_dir).glob("*.csv"))
    if not paths:
        raise DataError(f"no CSV files in {corpus_dir}")
    out = {}
    for path in paths:
        ds = read_preprocessed(path, label_col)
        out[path.stem] = replace(ds, name=path.stem)
    return out


def cmd_benchmark(args) -> int:
    corpus = _load_corpus(args.corpus_dir, args.label_col)
    names = [m.strip() for m in args.methods.split(",") if m.strip()]
    cfg = _opnb_config(argparse.Namespace(**{**vars(args), "dim": None, "init": "pca",
                                             "max_iter": 200}))
    grid = (args.lam,) if args.lam is not None else harness.OPNB_LAMBDA_GRID
    registry = harness.make_methods(cfg, opnb_grid=grid)
    unknown = [m for m in names if m not in registry]
    if unknown:
        raise UsageError(f"unknown methods {unknown}; choose from {sorted(registry)}")
    report = harness.run_experiment(corpus, [registry[m] for m in names], repeats=args.repeats,
                                    seed=args.seed, folds=args.folds,
                                    train_fraction=args.train_frac,
                                    progress=lambda s: log.info(s))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv())
    (out / "timings.csv").write_text(report.timings_csv())
    summary = report.summary()
    summary.update({"tool": "nbproj", "version": __version__,
                    "config": {k: v for k, v in vars(args).items() if k != "func"},
                    "failures": [r for r in _strip(report.records) if r["status"] != "ok"]})
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    failed = sum(r["status"] != "ok" for r in report.records)
    print(f"{len(report.records)} cells, {failed} failed; results in {out}")
    return EXIT_OK


def _strip(records):
    return [{k: v for k, v in r.items() if k != "seconds"} for r in records]


def cmd_stats(args) -> int:
    corpus = _load_corpus(args.corpus_dir, args.label_col)
    rows = []
    for name, ds in corpus.items():
        st = harness.dataset_stats(ds, seed=args.seed, repeats=args.repeats)
        rows.append({"dataset": name, **{s: getattr(st, s) for s in harness.STAT_NAMES}})
    table = pd.DataFrame(rows)
    table.to_csv(args.out, index=False, lineterminator="\n", float_format="%.17g")
    extra = {}
    if args.summary:
        summary = json.loads(Path(args.summary).read_text())
        m = summary["methods"].index(args.method)
        stud = {d: row[m] for d, row in zip(summary["datasets"], summary["studentised"])}
        keep = [i for i, r in enumerate(rows) if stud.get(r["dataset"]) is not None]
        response = [stud[rows[i]["dataset"]] for i in keep]
        S = table.loc[keep, list(harness.STAT_NAMES)].to_numpy(dtype=float)
        reg = harness.stats_regression(response, S)
        extra["regression"] = dict(zip(reg.names, reg.coefficients.tolist()))
        print(json.dumps(extra["regression"], indent=2))
    _write_sidecar(Path(args.out), args, **extra)
    return EXIT_OK


def cmd_project(args) -> int:
    model = load_model(args.model)
    dims = [int(d) - 1 for d in args.dims.split(",")]
    if len(dims) != 2:
        raise UsageError("--dims takes two comma-separated coordinates")
    X = _covariates_for(model, args.csv_in, args.label_col)
    frame = pd.read_csv(args.csv_in)
    labels = frame[args.label_col].tolist() if args.label_col in frame.columns else None

    if isinstance(model, opnb.TrainedOPNBModel):
        Z = model.transform(X)
        reference = np.median(model.Z, axis=0)

        def classify(L):
            lp = opnb.log_posterior_projected(L, model.Z, model.y, model.priors, model.kernel)
            return np.argmax(lp, axis=1) + 1
    elif isinstance(model, ScaledClassifier) and model.kind == "lda":
        lda = model.model
        Z = lda.transform(apply_scaling(X, fit_scaling_like(model)))
        reference = np.median(Z, axis=0)
        centres = lda.means @ lda.directions

        def classify(L):
            d2 = np.sum((L[:, None, :] - centres[None, :, :]) ** 2, axis=2)
            return np.argmax(np.log(lda.priors)[None, :] - 0.5 * d2, axis=1) + 1
    else:
        raise UsageError("projection export needs an opnb or lda model")
    if Z.shape[1] < 2:
        raise DimensionTooLow(f"projection has {Z.shape[1]} dimension(s); need at least 2")
    if max(dims) >= Z.shape[1] or min(dims) < 0:
        raise UsageError(f"--dims must lie in 1..{Z.shape[1]}")

    points = pd.DataFrame(Z, columns=[f"z{j + 1}" for j in range(Z.shape[1])])
    if labels is not None:
        points["label"] = labels
    points.to_csv(f"{args.out_prefix}_points.csv", index=False, lineterminator="\n",
                  float_format="%.17g")

    axes = []
    for d in dims:
        lo, hi = Z[:, d].min(), Z[:, d].max()
        pad = 0.05 * (hi - lo if hi > lo else 1.0)
        axes.append(np.linspace(lo - pad, hi + pad, args.grid))
    A, B = np.meshgrid(axes[0], axes[1], indexing="ij")
    lattice = np.tile(reference, (A.size, 1))
    lattice[:, dims[0]] = A.ravel()
    lattice[:, dims[1]] = B.ravel()
    pred = classify(lattice)
    grid = pd.DataFrame({f"z{dims[0] + 1}": A.ravel(), f"z{dims[1] + 1}": B.ravel(),
                         "predicted": _decode(model, pred)})
    grid.to_csv(f"{args.out_prefix}_lattice.csv", index=False, lineterminator="\n",
                float_format="%.17g")
    _write_sidecar(Path(f"{args.out_prefix}_lattice.csv"), args, reference=reference.tolist())
    return EXIT_OK


def fit_scaling_like(model: ScaledClassifier):
    from .scaling import ScalingParams

    return ScalingParams(model.column_scales)


COMMANDS = {
    "preprocess": cmd_preprocess,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "benchmark": cmd_benchmark,
    "stats": cmd_stats,
    "project": cmd_project,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"nbproj: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"nbproj: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DimensionTooLow, FileNotFoundError) as exc:
        print(f"nbproj: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"nbproj: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NBProjError as exc:
        print(f"nbproj: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
