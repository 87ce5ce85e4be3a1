"""Command-line entry point: ``gsem {fit,cv,tune,interpret,export-network}``.

Settings resolve in order: built-in defaults, then ``--config`` (JSON), then
flags given explicitly. The resolved configuration is echoed to
``<out>/config.json`` and can be fed back through ``--config``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .core import FitOptions, Hyperparameters, build_graph
from .evaluation import DEFAULT_RATIOS, cross_validate, grid_search
from .interpret import analyze, export_network, rank_sum_test
from .solver import NumericalError, fit

logger = logging.getLogger("gsem")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

DEFAULT_GRID = {
    "alpha": [0.0, 0.01, 0.1, 1.0, 10.0, 100.0],
    "beta": [0.0, 0.01, 0.1, 1.0, 10.0, 100.0],
    "lambda": [0.0, 0.01, 0.1, 1.0, 10.0, 100.0],
    "tau": [0.0, 0.25, 0.65, 0.75, 0.85, 0.95],
}

DEFAULTS = {
    "associations": None,
    "similarity": None,
    "classes": None,
    "coefficients": None,
    **Hyperparameters().to_dict(),
    **{k: v for k, v in FitOptions().to_dict().items()},
    "folds": 10,
    "ratios": list(DEFAULT_RATIOS),
    "validation_ratio": 2.0,
    "hide_validation": True,
    "grid_file": None,
    "min_class_size": 5,
    "network_min_class_size": 10,
    "edge_threshold": 0.5,
    "baseline_beta": None,
    "baseline_lambda": None,
    "deterministic": True,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ratios(text: str) -> list[float]:
    return [float(r) for r in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = common.add_argument_group("data")
    g.add_argument("--config", help="JSON file of settings (e.g. a previous config.json)")
    g.add_argument("--associations", help="drug-disease associations (edge list or dense TSV)")
    g.add_argument("--similarity", help="dense disease-disease similarity TSV")
    g.add_argument("--classes", help="disease<TAB>class file")
    g.add_argument("--coefficients", help="previously fitted coefficient TSV (skips fitting)")
    g.add_argument("--out", help="output directory", default=None)
    h = common.add_argument_group("model")
    h.add_argument("--alpha", type=float)
    h.add_argument("--beta", type=float)
    h.add_argument("--lambda", dest="lambda", type=float)
    h.add_argument("--gamma", type=float)
    h.add_argument("--tau", type=float)
    f = common.add_argument_group("fitting")
    f.add_argument("--maxiter", type=int)
    f.add_argument("--tol", type=float)
    f.add_argument("--init-bound", dest="init_bound", type=float)
    f.add_argument("--epsilon", type=float)
    f.add_argument("--seed", type=int)
    f.add_argument("--deterministic", action=argparse.BooleanOptionalAction,
                   help="limit BLAS to one thread so reductions are reproducible (default on)")
    f.add_argument("-v", "--verbose", action="store_true", default=False)

    parser = _Parser(prog="gsem", description="Geometric self-expressive models")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("fit", parents=[common], argument_default=argparse.SUPPRESS, help="fit C on all associations")
    cv = sub.add_parser("cv", parents=[common], argument_default=argparse.SUPPRESS, help="cross-validated AUPR")
    tune = sub.add_parser("tune", parents=[common], argument_default=argparse.SUPPRESS, help="grid search on validation AUPR")
    for p in (cv, tune):
        p.add_argument("--folds", type=int)
        p.add_argument("--validation-ratio", dest="validation_ratio", type=float)
        p.add_argument("--hide-validation", dest="hide_validation",
                       action=argparse.BooleanOptionalAction)
    cv.add_argument("--ratios", type=_ratios, help="e.g. '1,5,10,100'")
    tune.add_argument("--grid-file", dest="grid_file",
                      help="JSON with alpha/beta/lambda/tau lists (default: the built-in grid)")
    interp = sub.add_parser("interpret", parents=[common], argument_default=argparse.SUPPRESS, help="intra/inter-class similarity analysis")
    interp.add_argument("--min-class-size", dest="min_class_size", type=int)
    interp.add_argument("--baseline-beta", dest="baseline_beta", type=float,
                        help="also fit an alpha=0 baseline with this beta and compare")
    interp.add_argument("--baseline-lambda", dest="baseline_lambda", type=float)
    net = sub.add_parser("export-network", parents=[common], argument_default=argparse.SUPPRESS, help="node/edge lists of disease similarity")
    net.add_argument("--min-class-size", dest="min_class_size", type=int)
    net.add_argument("--network-min-class-size", dest="network_min_class_size", type=int)
    net.add_argument("--edge-threshold", dest="edge_threshold", type=float)
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    explicit = {k: v for k, v in vars(args).items() if k not in ("command", "verbose", "config", "out")}
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise io.DataError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(loaded) - set(DEFAULTS) - {"command"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        loaded.pop("command", None)
        cfg.update(loaded)
    cfg.update(explicit)
    return cfg


def _hp(cfg) -> Hyperparameters:
    return Hyperparameters(alpha=cfg["alpha"], beta=cfg["beta"], lam=cfg["lambda"],
                           gamma=cfg["gamma"], tau=cfg["tau"])


def _opts(cfg) -> FitOptions:
    return FitOptions(maxiter=cfg["maxiter"], tol=cfg["tol"], init_bound=cfg["init_bound"],
                      epsilon=cfg["epsilon"], seed=cfg["seed"],
                      objective_stride=cfg["objective_stride"])


def _require(cfg, key):
    if not cfg.get(key):
        raise UsageError(f"--{key.replace('_', '-')} is required for this command")
    return cfg[key]


def _load_inputs(cfg, need_graph: bool):
    X = io.load_associations(_require(cfg, "associations"))
    W = None
    if cfg.get("similarity"):
        W, _ = io.load_similarity(cfg["similarity"], X.disease_ids)
    elif need_graph:
        raise UsageError("--similarity is required when alpha > 0 (omit it only with --alpha 0)")
    return X, W


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fit_all(cfg, X, W, hp):
    graph = build_graph(W, hp.tau) if hp.alpha > 0 else None
    return fit(X, graph, hp, _opts(cfg))


def cmd_fit(cfg, out: Path):
    hp = _hp(cfg)
    X, W = _load_inputs(cfg, hp.alpha > 0)
    result = _fit_all(cfg, X, W, hp)
    io.save_coefficients(out / "coefficients.tsv", result.coefficients, X.disease_ids)
    if hp.lam > 0:
        io.save_sparse_coefficients(out / "coefficients_sparse.tsv", result.coefficients,
                                    X.disease_ids)
    _write_json(out / "fit_diagnostics.json", {
        "iterations": result.iterations,
        "converged": result.converged,
        "final_objective": result.final_objective,
        "kkt_residual": result.kkt_residual,
        "max_diagonal_before_zeroing": result.max_diagonal,
        "monotonicity_violations": result.monotonicity_violations,
        "n_drugs": X.shape[0],
        "n_diseases": X.shape[1],
        "n_positives": X.n_positives,
        "nonzero_coefficients": int(np.count_nonzero(result.coefficients)),
    })
    with open(out / "fit_history.tsv", "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["iteration", "objective", "delta"])
        objs = dict(zip(result.objective_iterations, result.objective_history))
        deltas = [None, *result.delta_history]
        for it in range(result.iterations + 1):
            o = objs.get(it)
            d = deltas[it]
            w.writerow([it, "" if o is None else repr(o), "" if d is None else repr(d)])
    print(f"fit: {result.iterations} iterations, converged={result.converged}, "
          f"objective={result.final_objective:.6g}, kkt={result.kkt_residual:.3g}")
    return EXIT_OK


def write_report(path: Path, report):
    """One row per (fold, ratio), then a commented summary block."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["fold", "ratio", "aupr"])
        for r, values in report.per_ratio.items():
            for f, v in enumerate(values):
                w.writerow([f, repr(float(r)), repr(v)])
        fh.write("# summary\n")
        fh.write("# ratio\tmean\tsd\tk\n")
        for r, mean, sd in report.summary():
            fh.write(f"# {float(r)!r}\t{mean!r}\t{sd!r}\t{len(report.per_ratio[r])}\n")
        if report.validation:
            fh.write(f"# validation_ratio\t{report.validation_ratio!r}\n")
            fh.write(f"# validation_mean\t{report.validation_mean!r}\n")
        fh.write(f"# not_converged_folds\t{report.converged.count(False)}\n")
        fh.write(f"# pinned_positives\t{report.n_pinned}\n")


def read_report(path) -> dict[float, list[float]]:
    per_ratio: dict[float, list[float]] = {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("fold"):
                continue
            f, r, v = line.rstrip("\n").split("\t")
            per_ratio.setdefault(float(r), []).append(float(v))
    return per_ratio


def cmd_cv(cfg, out: Path):
    hp = _hp(cfg)
    X, W = _load_inputs(cfg, hp.alpha > 0)
    graph = build_graph(W, hp.tau) if hp.alpha > 0 else None
    report = cross_validate(X, graph, hp, _opts(cfg), k=cfg["folds"], ratios=cfg["ratios"],
                            seed=cfg["seed"], validation_ratio=cfg["validation_ratio"],
                            hide_validation=cfg["hide_validation"])
    write_report(out / "cv_report.tsv", report)
    for r, mean, sd in report.summary():
        print(f"ratio {r:g}: AUPR {mean:.4f} +/- {sd:.4f}")
    return EXIT_OK


def cmd_tune(cfg, out: Path):
    X = io.load_associations(_require(cfg, "associations"))
    if cfg.get("grid_file"):
        try:
            grid = json.loads(Path(cfg["grid_file"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise io.DataError(f"cannot read grid file: {exc}") from exc
    else:
        grid = DEFAULT_GRID
    W = None
    if any(a > 0 for a in grid.get("alpha", [cfg["alpha"]])):
        _, W = _load_inputs(cfg, True)
    grid = {k: grid.get(k, [cfg[k]]) for k in ("alpha", "beta", "lambda", "tau")}
    result = grid_search(X, W, grid, _opts(cfg), k=cfg["folds"],
                         validation_ratio=cfg["validation_ratio"], seed=cfg["seed"],
                         gamma=cfg["gamma"])
    cols = ["alpha", "beta", "lambda", "gamma", "tau", "validation_aupr", "validation_sd", "status"]
    with open(out / "grid.tsv", "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(cols)
        for row in result.table:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols])
    if result.best is None:
        logger.error("no grid point produced a usable score")
        return EXIT_NUMERICAL
    _write_json(out / "best_hyperparameters.json", result.best.to_dict())
    print("best:", json.dumps(result.best.to_dict(), sort_keys=True))
    return EXIT_OK


def _coefficients(cfg, X, W, hp):
    if cfg.get("coefficients"):
        C, _ = io.load_coefficients(cfg["coefficients"], X.disease_ids)
        np.fill_diagonal(C, 0.0)
        return C
    return _fit_all(cfg, X, W, hp).coefficients


def _write_values(path: Path, values):
    with open(path, "w") as fh:
        fh.write("similarity\n")
        fh.writelines(f"{float(v)!r}\n" for v in values)


def cmd_interpret(cfg, out: Path):
    hp = _hp(cfg)
    X, W = _load_inputs(cfg, hp.alpha > 0 and not cfg.get("coefficients"))
    classes = io.load_classes(_require(cfg, "classes"), X.disease_ids, cfg["min_class_size"])
    C = _coefficients(cfg, X, W, hp)
    analysis = analyze(C, X.disease_ids, classes)
    summary = {"model": analysis.summary(), "class_counts": classes.class_counts,
               "n_classified": len(classes.assignments)}
    io.save_similarity(out / "similarity.tsv", analysis.similarity, X.disease_ids)
    _write_values(out / "intra_values.tsv", analysis.intra_values)
    _write_values(out / "inter_values.tsv", analysis.inter_values)
    if cfg.get("baseline_beta") is not None or cfg.get("baseline_lambda") is not None:
        base_hp = Hyperparameters(
            alpha=0.0,
            beta=cfg["beta"] if cfg.get("baseline_beta") is None else cfg["baseline_beta"],
            lam=cfg["lambda"] if cfg.get("baseline_lambda") is None else cfg["baseline_lambda"],
            gamma=hp.gamma, tau=hp.tau)
        base = analyze(fit(X, None, base_hp, _opts(cfg)).coefficients, X.disease_ids, classes)
        _write_values(out / "baseline_intra_values.tsv", base.intra_values)
        _write_values(out / "baseline_inter_values.tsv", base.inter_values)
        cmp = rank_sum_test(analysis.intra_values, base.intra_values)
        summary["baseline"] = {**base.summary(), "hyperparameters": base_hp.to_dict()}
        summary["model_vs_baseline_intra"] = {
            "statistic": cmp.statistic, "p_value": cmp.p_value,
            "log10_p_value": cmp.log10_p_value, "p_value_reported": cmp.p_upper_bound()}
    _write_json(out / "interpretation.json", summary)
    m = summary["model"]
    print(f"intra {m['mean_intra']:.4f} vs inter {m['mean_inter']:.4f}, "
          f"p {m['p_value_reported']}")
    return EXIT_OK


def cmd_export_network(cfg, out: Path):
    hp = _hp(cfg)
    X, W = _load_inputs(cfg, hp.alpha > 0 and not cfg.get("coefficients"))
    classes = io.load_classes(_require(cfg, "classes"), X.disease_ids, cfg["min_class_size"])
    C = _coefficients(cfg, X, W, hp)
    sim = analyze(C, X.disease_ids, classes).similarity
    nodes, edges = export_network(sim, X.disease_ids, classes, out,
                                  edge_threshold=cfg["edge_threshold"],
                                  min_class_size=cfg["network_min_class_size"])
    print(f"wrote {nodes} and {edges}")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "cv": cmd_cv,
    "tune": cmd_tune,
    "interpret": cmd_interpret,
    "export-network": cmd_export_network,
}


def _blas_limits(deterministic: bool):
    if not deterministic:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=1, user_api="blas")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if not args.out:
            raise UsageError("--out is required")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        # the echo leaves out the output directory so runs into different
        # directories produce identical files
        _write_json(out / "config.json", {"command": args.command, **cfg})
        with _blas_limits(cfg["deterministic"]):
            return COMMANDS[args.command](cfg, out)
    except UsageError as exc:
        print(f"gsem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"gsem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (io.DataError, OSError, ValueError, KeyError) as exc:
        print(f"gsem: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
