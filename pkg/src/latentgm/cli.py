"""Command-line interface: simulate, fit, path, classify, impute, cv, eval-omega."""
import argparse
import contextlib
import csv
import json
import logging
import os
import shutil
import sys
import tempfile

import numpy as np

from .data import DataError, load_csv, read_schema, write_csv, write_schema
from .em import EMConfig, ModelFormatError, em_fit, encode_matrix, load_model, save_model
from .experiments import simulate
from .gibbs import GibbsConfig
from .numerics import matrix_norms
from .precision import (METHODS, ConvergenceError, InfeasibleError, default_lambdas,
                        export_path, precision_path, read_matrix, write_matrix)
from .predict import (classify_rows, covariance_from_precision, cross_validate,
                      impute_dataset)
from .simulation import CalibrationError, outcome_column
from .thresholds import estimate_thresholds

log = logging.getLogger("latentgm")

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _lambda_list(text):
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad lambda list {text!r}") from None
    if not values or any(not np.isfinite(v) or v < 0 for v in values):
        raise argparse.ArgumentTypeError("lambdas must be finite non-negative numbers")
    return sorted(values, reverse=True)


# ---------------------------------------------------------------- outputs

@contextlib.contextmanager
def staged_file(path):
    """Yield a temporary path that replaces ``path`` only if the block succeeds."""
    target = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=os.path.dirname(target))
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, target)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


@contextlib.contextmanager
def staged_dir(path):
    """Yield a scratch directory whose files move into ``path`` on success."""
    target = os.path.abspath(path)
    parent = os.path.dirname(target)
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".tmp-", dir=parent)
    try:
        yield tmp
        os.makedirs(target, exist_ok=True)
        for name in sorted(os.listdir(tmp)):
            os.replace(os.path.join(tmp, name), os.path.join(target, name))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        out.writerows(rows)


def _gibbs(args):
    return GibbsConfig(burn_in=args.burn_in, keep=args.keep, seed=args.seed)


def _em_config(args):
    return EMConfig(max_iters=args.max_iters, param_tol=args.tol, gibbs=_gibbs(args),
                    seed=args.seed, init=args.init)


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    data = simulate(args.scenario, n=args.n, seed=args.seed, missing=args.missing)
    names = data.complete.names
    with staged_dir(args.out) as out:
        write_schema(data.complete.schema, os.path.join(out, "schema.txt"))
        write_csv(data.observed, os.path.join(out, "data.csv"))
        write_csv(data.complete, os.path.join(out, "complete.csv"))
        write_matrix(data.omega, os.path.join(out, "truth_omega.json"), kind="precision")
        write_matrix(data.sigma, os.path.join(out, "truth_sigma.json"), kind="covariance")
        with open(os.path.join(out, "truth_thresholds.json"), "w", encoding="utf-8") as fh:
            json.dump({names[j]: encode_matrix([c])[0]
                       for j, c in sorted(data.thresholds.items())}, fh, indent=1)
            fh.write("\n")
        _write_rows(os.path.join(out, "latent.csv"), names,
                    ([repr(float(v)) for v in row] for row in data.latent))
        with open(os.path.join(out, "meta.json"), "w", encoding="utf-8") as fh:
            json.dump({"scenario": args.scenario, "n": args.n, "seed": args.seed,
                       "missing": args.missing,
                       "outcome": names[outcome_column(data.complete, data.thresholds)]},
                      fh, indent=1)
            fh.write("\n")


def cmd_fit(args):
    ds = load_csv(args.data, args.schema)
    params, trace = em_fit(ds, estimate_thresholds(ds), _em_config(args), args.threads)
    with contextlib.ExitStack() as stack:
        model = stack.enter_context(staged_file(args.out))
        save_model(params, model)
        if args.trace:
            trace_path = stack.enter_context(staged_file(args.trace))
            _write_rows(trace_path, ["iteration", "max_change", "clamped"],
                        ([t["iteration"], repr(t["max_change"]), t["clamped"]] for t in trace))


def cmd_path(args):
    params = load_model(args.model)
    lambdas = args.lambdas if args.lambdas is not None else default_lambdas(params.sigma,
                                                                             args.grid)
    path = precision_path(params.sigma, lambdas, args.method)
    with staged_dir(args.out) as out:
        export_path(path, out, [v.name for v in params.schema])


def cmd_classify(args):
    params = load_model(args.model)
    ds = load_csv(args.data, params.schema)
    try:
        target = ds.column_index(args.target)
    except (KeyError, IndexError, ValueError, DataError) as exc:
        raise UsageError(f"--target: {exc}") from None
    omega = read_matrix(args.omega)
    if omega.shape != (ds.p, ds.p):
        raise DataError(f"--omega has shape {omega.shape}, model has {ds.p} columns")
    labels, probs = classify_rows(ds, target, params, covariance_from_precision(omega),
                                  _gibbs(args), threads=args.threads)
    header = ["row", "predicted"] + [f"prob_{k}" for k in range(probs.shape[1])]
    with staged_file(args.out) as out:
        _write_rows(out, header, ([i, int(labels[i])] + [repr(float(v)) for v in probs[i]]
                                  for i in range(ds.n)))


def cmd_impute(args):
    params = load_model(args.model)
    ds = load_csv(args.data, params.schema)
    done = impute_dataset(ds, params, _gibbs(args), args.draws, args.threads)
    with staged_dir(args.out) as out:
        write_schema(params.schema, os.path.join(out, "schema.txt"))
        for k, d in enumerate(done, start=1):
            write_csv(d, os.path.join(out, f"imputed_{k:03d}.csv"))


def cmd_cv(args):
    ds = load_csv(args.data, args.schema)
    try:
        target = ds.column_index(args.target)
    except (KeyError, IndexError, ValueError, DataError) as exc:
        raise UsageError(f"--target: {exc}") from None
    res = cross_validate(ds, target, lambdas=args.lambdas, method=args.method,
                         folds=args.folds, cfg=_gibbs(args), seed=args.seed,
                         em_cfg=_em_config(args), threads=args.threads, n_lambdas=args.grid)
    with staged_file(args.out) as out:
        res.write_csv(out)


def cmd_eval_omega(args):
    est, truth = read_matrix(args.estimate), read_matrix(args.truth)
    if est.shape != truth.shape:
        raise DataError(f"shape mismatch: estimate {est.shape}, truth {truth.shape}")
    fro, spec = matrix_norms(est - truth)
    with staged_file(args.out) as out:
        _write_rows(out, ["frobenius", "spectral"], [[repr(fro), repr(spec)]])


# ---------------------------------------------------------------- parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                        help="worker threads; results do not depend on it "
                             "(default: available cores)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    gibbs = argparse.ArgumentParser(add_help=False)
    gibbs.add_argument("--burn-in", type=_nonneg_int, default=100,
                       help="discarded Gibbs sweeps per chain (default: 100)")
    gibbs.add_argument("--keep", type=_positive_int, default=500,
                       help="retained Gibbs sweeps per chain (default: 500)")
    gibbs.add_argument("--seed", type=_nonneg_int, default=0, help="master seed (default: 0)")

    em = argparse.ArgumentParser(add_help=False)
    em.add_argument("--max-iters", type=_positive_int, default=50,
                    help="maximum EM iterations (default: 50)")
    em.add_argument("--tol", type=float, default=1e-3,
                    help="stop when no parameter moves more than this (default: 1e-3)")
    em.add_argument("--init", choices=("identity", "random"), default="identity",
                    help="starting covariance (default: identity)")

    grid = argparse.ArgumentParser(add_help=False)
    g = grid.add_mutually_exclusive_group()
    g.add_argument("--lambdas", type=_lambda_list, default=None,
                   help="comma-separated penalties, sorted descending on use")
    g.add_argument("--grid", type=_positive_int, default=20,
                   help="size of the default log-spaced penalty grid (default: 20)")
    grid.add_argument("--method", choices=METHODS, default=METHODS[0],
                      help="sparse precision estimator (default: glasso)")

    parser = _Parser(prog="latentgm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset",
                       description="Draw a synthetic mixed dataset with its ground truth.")
    p.add_argument("--scenario", type=int, choices=(1, 2, 3, 4), required=True,
                   help="column layout")
    p.add_argument("--n", type=_positive_int, default=200, help="rows (default: 200)")
    p.add_argument("--seed", type=_nonneg_int, default=0, help="master seed (default: 0)")
    p.add_argument("--missing", action=argparse.BooleanOptionalAction, default=True,
                   help="blank cells at random in ten columns (default: on)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common, gibbs, em], help="fit the latent model by EM",
                       description="Estimate thresholds, latent mean and covariance.")
    p.add_argument("--data", required=True, help="CSV data file, NA for missing cells")
    p.add_argument("--schema", required=True, help="schema file: name,kind[,levels] per line")
    p.add_argument("--out", required=True, help="model file to write (JSON)")
    p.add_argument("--trace", default=None, help="optional CSV of per-iteration changes")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("path", parents=[common, grid], help="sparse precision path",
                       description="Sparse precision estimates along a penalty grid.")
    p.add_argument("--model", required=True, help="model file from 'fit'")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("classify", parents=[common, gibbs], help="predict a categorical column",
                       description="Predict a categorical column of every row.")
    p.add_argument("--model", required=True, help="model file from 'fit'")
    p.add_argument("--omega", required=True, help="precision matrix file (e.g. from 'path')")
    p.add_argument("--data", required=True, help="CSV with the model's columns")
    p.add_argument("--target", required=True, help="column name or index to predict")
    p.add_argument("--out", required=True, help="predictions CSV")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("impute", parents=[common, gibbs], help="multiple imputation",
                       description="Write completed copies of a dataset.")
    p.add_argument("--model", required=True, help="model file from 'fit'")
    p.add_argument("--data", required=True, help="CSV with the model's columns")
    p.add_argument("--draws", type=_positive_int, default=5,
                   help="completed datasets to write (default: 5)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("cv", parents=[common, gibbs, em, grid],
                       help="cross-validated classification error",
                       description="K-fold prediction error along a penalty grid.")
    p.add_argument("--data", required=True, help="CSV data file")
    p.add_argument("--schema", required=True, help="schema file")
    p.add_argument("--target", required=True, help="categorical column name or index")
    p.add_argument("--folds", type=_positive_int, default=5, help="folds (default: 5)")
    p.add_argument("--out", required=True, help="CSV of error per penalty")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("eval-omega", parents=[common], help="precision estimation error",
                       description="Frobenius and spectral norms of estimate minus truth.")
    p.add_argument("--estimate", required=True, help="matrix file")
    p.add_argument("--truth", required=True, help="matrix file")
    p.add_argument("--out", required=True, help="CSV with frobenius,spectral")
    p.set_defaults(func=cmd_eval_omega)
    return parser


def _fail(code, kind, message):
    print(json.dumps({"error": kind, "exit": code, "message": str(message)}), file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", exc)
    except (DataError, ModelFormatError) as exc:
        return _fail(EXIT_RUNTIME, "input", exc)
    except (ConvergenceError, InfeasibleError, CalibrationError, np.linalg.LinAlgError,
            FloatingPointError, RuntimeError) as exc:
        return _fail(EXIT_RUNTIME, "numerical", exc)
    except (OSError, ValueError) as exc:
        return _fail(EXIT_RUNTIME, "runtime", exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
