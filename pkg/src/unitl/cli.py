"""Command-line front end.

Exit status: 0 on success, 1 on usage errors, 2 on data or model errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys

import numpy as np

from . import io as uio
from .analysis import asymptotic_report, estimate_components, estimate_moments, report_to_csv, rho_star
from .core import TransferHyperparams, fit_transfer
from .errors import TransferError
from .learners import DEFAULT_LAMBDA, ForestLearner, RidgeLearner
from .selection import GridSpec, classify_regime, cross_validate, default_grid, select_entry
from .synthdata import (ExperimentConfig, gen_linear_tasks, gen_relu_tasks, landscape_experiment,
                        sample_dataset)
from ._rng import child_seed

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _values(spec):
    """``"a:b:step"`` (inclusive) or a comma-separated list."""
    spec = spec.strip()
    if ":" in spec:
        parts = [float(s) for s in spec.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise UsageError(f"bad range {spec!r}; use start:stop:step")
        start, stop, step = parts
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(count)]
    return [float(s) for s in spec.split(",") if s.strip()]


def _add_learner(p):
    p.add_argument("--learner", choices=["ridge", "forest"], default="ridge")
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--center", action="store_true", help="fit a ridge intercept")
    p.add_argument("--n-tree", type=int, default=200)
    p.add_argument("--m-try", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=5)


def _add_grid(p):
    p.add_argument("--grid-tau", default=None, help="start:stop:step or comma list")
    p.add_argument("--grid-rho", default=None, help="start:stop:step or comma list")
    p.add_argument("--no-diagonal", action="store_true")


def _add_source(p, required):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--source-model", help="model file or task file holding the source model")
    g.add_argument("--source-cmd", help="command that reads feature CSV and prints predictions")


def _learner(args):
    if args.learner == "ridge":
        return RidgeLearner(lam=args.lam, center=args.center)
    return ForestLearner(n_tree=args.n_tree, m_try=args.m_try, min_leaf=args.min_leaf, seed=args.seed)


def _grid(args):
    if args.grid_tau is None and args.grid_rho is None and not args.no_diagonal:
        return default_grid()
    base = default_grid()
    taus = _values(args.grid_tau) if args.grid_tau else base.tau_values
    rhos = _values(args.grid_rho) if args.grid_rho else base.rho_values
    return GridSpec(tuple(taus), tuple(rhos), include_diagonal=not args.no_diagonal)


def _source(args):
    if getattr(args, "source_cmd", None):
        return uio.CommandSource(shlex.split(args.source_cmd))
    if getattr(args, "source_model", None):
        return uio.load_source(args.source_model)
    return None


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)


def _stem(path):
    root, _ = os.path.splitext(path)
    return root


def _tasks(kind, alpha, p, seed):
    if kind == "linear":
        return gen_linear_tasks(p, alpha, seed)
    return gen_relu_tasks(alpha, seed, p=p)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_fit(args):
    data = uio.read_dataset(args.data)
    learner = _learner(args)
    source = _source(args)
    if (args.tau is None) != (args.rho is None):
        raise UsageError("--tau and --rho must be given together")
    provenance = {"seed": args.seed, "learner": learner.to_dict()}

    if source is None:
        if args.tau not in (None, 0.0) or args.rho not in (None, 0.0):
            raise UsageError("--tau/--rho need a source model")
        model = learner.fit(data.features, data.targets)
        uio.save_model(args.out, uio.PlainModel(model), provenance=provenance)
        return EXIT_OK

    if args.tau is not None:
        hp = TransferHyperparams(args.tau, args.rho)
    else:
        grid = _grid(args)
        table = cross_validate(data, source, grid, learner, k=args.k, seed=args.seed)
        best = select_entry(table)
        hp = TransferHyperparams(best.tau, best.rho)
        _write(args.cv_out or _stem(args.out) + ".cv.csv", table.to_csv())
        provenance.update(grid=grid.to_dict(), k=args.k,
                          cv_summary={"cv_mse": best.cv_mse, "n_points": len(table)})
    predictor = fit_transfer(data, source, hp, learner)
    regime = classify_regime(hp).regime.value
    uio.save_model(args.out, predictor, regime=regime, provenance=provenance)
    return EXIT_OK


def cmd_predict(args):
    predictor = uio.load_model(args.model)
    X = uio.read_features(args.data)
    pred = predictor.predict_batch(X)
    _write(args.out, uio.predictions_to_csv(pred, header=not args.raw))
    return EXIT_OK


def cmd_select(args):
    data = uio.read_dataset(args.data)
    source = _source(args)
    table = cross_validate(data, source, _grid(args), _learner(args), k=args.k, seed=args.seed)
    best = select_entry(table)
    label = classify_regime(TransferHyperparams(best.tau, best.rho))
    if args.cv_out:
        _write(args.cv_out, table.to_csv())
    doc = {"tau": best.tau, "rho": best.rho, "regime": label.regime.value, "cv_mse": best.cv_mse}
    _write(args.out, json.dumps(doc, indent=1) + "\n")
    return EXIT_OK


def cmd_landscape(args):
    config = ExperimentConfig(kind=args.kind, alpha=args.alpha, sigma_eps=args.sigma_eps,
                              n_train=args.n_train, n_eval=args.n_eval, learner=_learner(args),
                              grid=_grid(args), seed=args.seed, p=args.p)
    land = landscape_experiment(config)
    _write(args.out, land.to_json() if args.format == "json" else land.to_csv())
    return EXIT_OK


def cmd_synth(args):
    pair = _tasks(args.kind, args.alpha, args.p, child_seed(args.seed, 0))
    data = sample_dataset(pair.target, args.p, args.n, args.sigma_eps, child_seed(args.seed, 1))
    _write(args.out, uio.dataset_to_csv(data))
    task_out = args.task_out or (_stem(args.out) + ".task.json" if args.out not in (None, "-") else None)
    if task_out:
        _write(task_out, uio.dumps(uio.task_document(pair)))
    return EXIT_OK


def cmd_analyze(args):
    if args.task:
        pair = uio.load_task(args.task)
    else:
        pair = _tasks(args.kind, args.alpha, args.p, child_seed(args.seed, 0))
    train = sample_dataset(pair.target, pair.p, args.n, args.sigma_eps, child_seed(args.seed, 1))
    smoother = RidgeLearner(lam=args.lam, center=args.center).fit(train.features, train.targets)
    eval_x = sample_dataset(pair.target, pair.p, args.n_eval, 0.0, child_seed(args.seed, 3)).features
    sigma2 = args.sigma_eps ** 2
    comps = estimate_components(eval_x, pair.target, pair.source, smoother, sigma_eps2=sigma2)
    m = estimate_moments(comps, sigma2)
    taus = _values(args.tau_probe)
    doc = {"moments": m.to_dict(), "n_eval": args.n_eval,
           "rho_star": [{"tau": t, "rho_star": rho_star(t, m)} for t in taus]}
    _write(args.out, json.dumps(doc, indent=1) + "\n")
    if args.report_out:
        _write(args.report_out, report_to_csv(asymptotic_report(m, _values(args.scales), taus)))
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="unitl", description="Transfer regression with a (tau, rho) family.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a transfer model (selecting tau, rho by CV unless given)")
    p.add_argument("--data", required=True)
    _add_source(p, required=False)
    _add_learner(p)
    _add_grid(p)
    p.add_argument("--tau", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--cv-out", help="CV table CSV (default: <out>.cv.csv)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict with a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", default="-", help="feature CSV, '-' for stdin")
    p.add_argument("--out", default="-")
    p.add_argument("--raw", action="store_true", help="one value per line, no header")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("select", help="cross-validate the grid and report the chosen point")
    p.add_argument("--data", required=True)
    _add_source(p, required=True)
    _add_learner(p)
    _add_grid(p)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.add_argument("--cv-out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("landscape", help="test-MSE landscape on a synthetic task pair")
    p.add_argument("--kind", choices=["linear", "relu"], default="linear")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--sigma-eps", type=float, default=1.0)
    p.add_argument("--n-train", type=int, default=50)
    p.add_argument("--n-eval", type=int, default=1000)
    p.add_argument("--p", type=int, default=300)
    _add_learner(p)
    _add_grid(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("synth", help="generate a synthetic task pair and target dataset")
    p.add_argument("--kind", choices=["linear", "relu"], default="linear")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--p", type=int, default=300)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--sigma-eps", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="dataset CSV")
    p.add_argument("--task-out", help="task file (default: <out>.task.json)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="bias-variance moments and asymptotic report")
    p.add_argument("--task", help="task file from 'synth'; otherwise generated")
    p.add_argument("--kind", choices=["linear", "relu"], default="linear")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--p", type=int, default=300)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--sigma-eps", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--center", action="store_true")
    p.add_argument("--n-eval", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scales", default="1,10,100,1000,10000,100000,1000000")
    p.add_argument("--tau-probe", default="0.2,0.5,0.8")
    p.add_argument("--out", default="-", help="moments JSON")
    p.add_argument("--report-out", help="asymptotic report CSV")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"unitl: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TransferError, OSError, ValueError, KeyError, TypeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"unitl: error: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
