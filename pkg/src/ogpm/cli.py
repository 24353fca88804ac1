"""Command-line front end; every command writes CSV to ``--out`` or stdout."""
from __future__ import annotations

import argparse
import contextlib
import csv
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import analytics, estimation, polar, solver
from .core import ErrorMetric, Interval
from .mechanisms import REGISTRY, get_mechanism

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NONCONVERGED = 4


class CLIError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CLIError(f"not a number list: {text!r}", EXIT_CONFIG) from None
    if not vals:
        raise CLIError("empty number list", EXIT_CONFIG)
    return vals


def _epsilons(text: str) -> list[float]:
    vals = _floats(text)
    if any(not (e > 0 and math.isfinite(e)) for e in vals):
        raise CLIError("epsilon values must be positive", EXIT_CONFIG)
    return vals


def _metric(text: str) -> ErrorMetric:
    try:
        return ErrorMetric.parse(text)
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None


def _domain(text: str) -> Interval:
    if text == "unit":
        return Interval.unit()
    if text == "circle":
        return Interval.circle()
    raise CLIError(f"domain must be unit or circle, got {text!r}", EXIT_CONFIG)


def _mechanism(name: str, domain: Optional[Interval] = None):
    try:
        return get_mechanism(name, domain)
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None


@contextlib.contextmanager
def _output(path: Optional[str]):
    if path is None or path == "-":
        yield sys.stdout
        return
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise CLIError(f"cannot write {path}: {exc}", EXIT_IO) from None
    with fh:
        yield fh


# ---------------------------------------------------------------------------
# commands


def cmd_curves(args) -> int:
    metric = _metric(args.metric)
    specs = [_mechanism(n) for n in args.mechanisms.split(",") if n.strip()]
    if args.grid < 2:
        raise CLIError("--grid must be at least 2", EXIT_CONFIG)
    curves = []
    for spec in specs:
        for eps in _epsilons(args.epsilon):
            try:
                curves.append(analytics.whole_domain_error(spec, eps, metric, args.grid))
            except ValueError as exc:
                raise CLIError(f"{spec.name}: {exc}", EXIT_CONFIG) from None
    with _output(args.out) as fh:
        analytics.write_curves_csv(curves, fh)
    return EXIT_OK


def cmd_worst_case(args) -> int:
    metric = _metric(args.metric)
    specs = [_mechanism(n) for n in args.mechanisms.split(",") if n.strip()]
    rows = []
    for spec in specs:
        for eps in _epsilons(args.epsilon):
            try:
                rows.append((spec.name, repr(eps), metric.name,
                             repr(analytics.worst_case_error(spec, eps, metric))))
            except ValueError as exc:
                raise CLIError(f"{spec.name}: {exc}", EXIT_CONFIG) from None
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("mechanism", "epsilon", "metric", "worst_case_err"))
        w.writerows(rows)
    return EXIT_OK


def _problem(args, m=None, eps=None, target=None) -> solver.SolverProblem:
    try:
        return solver.SolverProblem(_domain(args.domain), _metric(args.metric),
                                    args.m if m is None else m,
                                    args.epsilon if eps is None else eps,
                                    target or solver.WorstCase())
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None


def cmd_solve(args) -> int:
    target = None if args.x is None else solver.AtPoint(args.x)
    sol = solver.solve_probabilities(_problem(args, target=target), args.starts, args.seed)
    pdf = sol.pdf
    if args.place_at is not None:
        sol2 = solver.solve_intervals(_problem(args), sol.levels, args.place_at, seed=args.seed)
        pdf = sol2.pdf
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("piece_index", "density", "left", "right"))
        for i, p in enumerate(pdf.pieces):
            w.writerow((i, repr(p.density), repr(p.left), repr(p.right)))
    print(f"objective={sol.objective!r} converged={sol.converged} x={sol.x!r}",
          file=sys.stderr)
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


def cmd_verify_m(args) -> int:
    lo, hi = args.eps_range
    if not 0 < lo < hi:
        raise CLIError("--eps-range needs 0 < lo < hi", EXIT_CONFIG)
    if args.samples < 1:
        raise CLIError("--samples must be at least 1", EXIT_CONFIG)
    rep = solver.verify_optimal_m(_domain(args.domain), _metric(args.metric), args.m,
                                  args.samples, (lo, hi), args.seed)
    with _output(args.out) as fh:
        fh.write(rep.summary() + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("kind", "epsilon", "x"))
        for eps, x in rep.failures:
            w.writerow(("mismatch", repr(eps), repr(x)))
        for eps, x in rep.unconverged:
            w.writerow(("unconverged", repr(eps), repr(x)))
    return EXIT_OK if rep.all_equal else EXIT_FAIL


def _read_fit_samples(path: str) -> list[tuple[float, float]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc}", EXIT_IO) from None
    try:
        return [(float(r["epsilon"]), float(r["value"])) for r in rows]
    except (KeyError, TypeError, ValueError):
        raise CLIError(f"{path} needs numeric columns epsilon,value", EXIT_IO) from None


def cmd_fit(args) -> int:
    if args.input:
        samples = _read_fit_samples(args.input)
    else:
        # solve fresh: highest density of the m-piece worst-case optimum
        rng = np.random.default_rng(args.seed)
        lo, hi = args.eps_range
        samples = []
        for eps in rng.uniform(lo, hi, args.samples):
            sol = solver.solve_probabilities(_problem(args, eps=float(eps)), seed=args.seed)
            if not sol.converged:
                raise CLIError(f"solver did not converge at eps={eps}", EXIT_NONCONVERGED)
            samples.append((float(eps), float(sol.pdf.densities.max())))
    try:
        res = solver.fit_closed_form(samples, args.feature)
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("feature", "beta1", "beta2", "max_residual", "success"))
        w.writerow((res.feature, repr(res.beta[0]), repr(res.beta[1]), repr(res.max_residual),
                    res.success))
    return EXIT_OK if res.success else EXIT_NONCONVERGED


def cmd_estimate(args) -> int:
    try:
        if args.config:
            with open(args.config) as fh:
                cfg = estimation.parse_config(fh.read())
        else:
            cfg = estimation.ExperimentConfig(
                tuple(m for m in args.mechanisms.split(",") if m.strip()),
                tuple(_epsilons(args.epsilon)),
                tuple(t for t in args.tasks.split(",") if t.strip()),
                args.trials, args.bins, args.dataset, args.column, args.normalize,
                args.domain, args.n, 0)
        if args.seed is not None:
            cfg = estimation.ExperimentConfig(**{**cfg.__dict__, "seed": args.seed})
        data = cfg.load()
        reports = estimation.run_experiment(cfg, data)
    except estimation.DatasetError as exc:
        raise CLIError(str(exc), EXIT_IO) from None
    except OSError as exc:
        raise CLIError(str(exc), EXIT_IO) from None
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None
    with _output(args.out) as fh:
        estimation.write_reports_csv(reports, fh)
    return EXIT_OK


def cmd_polar_split(args) -> int:
    if not args.epsilon_total > 0 or not args.d > 0:
        raise CLIError("--epsilon-total and --d must be positive", EXIT_CONFIG)
    split = polar.optimal_budget_split(args.epsilon_total, args.d)
    print(f"eps1={split.eps1!r} eps2={split.eps2!r} total={split.total!r} "
          f"error={polar.total_error(split.eps1, split.total, args.d)!r}", file=sys.stderr)
    with _output(args.out) as fh:
        polar.write_budget_curve_csv(polar.budget_error_curve(args.epsilon_total, args.d,
                                                              args.grid), fh)
    return EXIT_OK


def cmd_sample(args) -> int:
    dom = _domain(args.domain)
    spec = _mechanism(args.mechanism, dom)
    if args.values:
        xs = _floats(args.values)
    elif args.input:
        try:
            xs = estimation.load_csv_dataset(args.input, args.column,
                                             estimation.Normalize.NONE, dom).values
        except (OSError, estimation.DatasetError) as exc:
            raise CLIError(str(exc), EXIT_IO) from None
    else:
        raise CLIError("give --values or --input", EXIT_CONFIG)
    eps = _epsilons(str(args.epsilon))[0]
    try:
        ys = spec.perturb(eps, np.asarray(xs, dtype=float), np.random.default_rng(args.seed))
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x", "y"))
        for x, y in zip(xs, ys):
            w.writerow((repr(float(x)), repr(float(y))))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ogpm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--out", default=None, help="output path (default stdout)")
        sp.set_defaults(func=fn)
        return sp

    names = ",".join(REGISTRY)
    c = add("curves", cmd_curves, "whole-domain error curves")
    c.add_argument("--mechanisms", default="ogpm", help=f"comma list from: {names}")
    c.add_argument("--epsilon", default="1", help="comma list of epsilons")
    c.add_argument("--metric", default="l1")
    c.add_argument("--grid", type=int, default=analytics.DEFAULT_GRID)

    c = add("worst-case", cmd_worst_case, "worst-case error per mechanism and epsilon")
    c.add_argument("--mechanisms", default="ogpm")
    c.add_argument("--epsilon", default="1")
    c.add_argument("--metric", default="l1")

    def solver_args(sp, m=3):
        sp.add_argument("--m", type=int, default=m)
        sp.add_argument("--metric", default="l1")
        sp.add_argument("--domain", default="unit", choices=("unit", "circle"))
        sp.add_argument("--seed", type=int, default=0)

    c = add("solve", cmd_solve, "numerically optimal m-piece mechanism")
    solver_args(c)
    c.add_argument("--epsilon", type=float, default=1.0)
    c.add_argument("--x", type=float, default=None, help="optimise at this input only")
    c.add_argument("--place-at", type=float, default=None,
                   help="re-place the solved densities for this input")
    c.add_argument("--starts", type=int, default=32)

    c = add("verify-m", cmd_verify_m, "Monte Carlo check of the optimal piece number")
    solver_args(c)
    c.add_argument("--samples", type=int, default=100)
    c.add_argument("--eps-range", type=float, nargs=2, default=(0.05, 10.0))

    c = add("fit", cmd_fit, "fit a closed form to solved densities")
    solver_args(c)
    c.add_argument("--feature", default="exp-half", choices=tuple(solver.FEATURES))
    c.add_argument("--input", default=None, help="CSV with columns epsilon,value")
    c.add_argument("--samples", type=int, default=50)
    c.add_argument("--eps-range", type=float, nargs=2, default=(0.1, 8.0))

    c = add("estimate", cmd_estimate, "distribution and mean estimation experiment")
    c.add_argument("--config", default=None, help="key=value experiment file")
    c.add_argument("--mechanisms", default="ogpm,pm-c,sw-c")
    c.add_argument("--epsilon", default="1,2,4")
    c.add_argument("--tasks", default="distribution,mean")
    c.add_argument("--trials", type=int, default=20)
    c.add_argument("--bins", type=int, default=estimation.DEFAULT_BINS)
    c.add_argument("--dataset", default="synthetic:uniform",
                   help="synthetic:{uniform,gaussian,vonmises} or a CSV path")
    c.add_argument("--column", default="value")
    c.add_argument("--normalize", default="unit", choices=("unit", "circle", "none"))
    c.add_argument("--domain", default="unit", choices=("unit", "circle"))
    c.add_argument("--n", type=int, default=10_000)
    c.add_argument("--seed", type=int, default=None)

    c = add("polar-split", cmd_polar_split, "optimal budget split for polar data")
    c.add_argument("--epsilon-total", type=float, required=True)
    c.add_argument("--d", type=float, default=1.0)
    c.add_argument("--grid", type=int, default=1001)

    c = add("sample", cmd_sample, "perturb a list of values")
    c.add_argument("--mechanism", default="ogpm")
    c.add_argument("--epsilon", type=float, default=1.0)
    c.add_argument("--domain", default="unit", choices=("unit", "circle"))
    c.add_argument("--values", default=None, help="comma list of inputs")
    c.add_argument("--input", default=None, help="CSV file of inputs")
    c.add_argument("--column", default="value")
    c.add_argument("--seed", type=int, default=0)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
