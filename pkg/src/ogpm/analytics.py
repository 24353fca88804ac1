"""Error curves, worst-case error and closed-form MSE expressions."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .core import ErrorMetric
from .mechanisms import UNIT, MechanismSpec, _check_eps, _check_x, ogpm_circular_params, ogpm_params

DEFAULT_GRID = 1001
CSV_HEADER = ("mechanism", "epsilon", "metric", "x", "err")


@dataclass(frozen=True)
class ErrorCurve:
    mechanism: str
    epsilon: float
    metric: ErrorMetric
    points: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        xs = [p[0] for p in self.points]
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise ValueError("curve points must be sorted by x")
        if any(e < -1e-12 for _, e in self.points):
            raise ValueError("negative error value")

    @property
    def x(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def err(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    def argmax(self) -> float:
        return float(self.x[np.argmax(self.err)])

    def rows(self):
        for x, e in self.points:
            yield (self.mechanism, repr(float(self.epsilon)), self.metric.name,
                   repr(float(x)), repr(float(e)))


def whole_domain_error(spec: MechanismSpec, eps: float, metric: ErrorMetric,
                       grid_n: int = DEFAULT_GRID) -> ErrorCurve:
    """``Err(x)`` at ``grid_n`` evenly spaced inputs, both endpoints included.

    On the circle the grid stops short of ``2*pi``, which is the same point
    as ``0``.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    eps = _check_eps(eps)
    dom = spec.input_domain
    xs = np.linspace(dom.lo, dom.hi, grid_n, endpoint=not dom.is_circular)
    pts = tuple((float(x), float(spec.expected_error(eps, metric, x))) for x in xs)
    return ErrorCurve(spec.name, eps, metric, pts)


def worst_case_error(spec: MechanismSpec, eps: float, metric: ErrorMetric,
                     grid_n: int = DEFAULT_GRID) -> float:
    """Maximum of ``Err(x)`` over the input domain.

    Pure piecewise mechanisms peak at the endpoints (classical) or at any
    single point (circular, by symmetry ``x = pi``). Truncated and Laplace
    baselines fall back to a grid maximum.
    """
    eps = _check_eps(eps)
    dom = spec.input_domain
    if spec.worst_case == "endpoints":
        return max(spec.expected_error(eps, metric, dom.lo),
                   spec.expected_error(eps, metric, dom.hi))
    if spec.worst_case == "antipode":
        return spec.expected_error(eps, metric, math.pi)
    return float(whole_domain_error(spec, eps, metric, grid_n).err.max())


def mse_closed_form_classical(eps: float, x: float) -> float:
    """Mean squared error of the classical optimal mechanism at ``x``.

    Three regimes: band clamped left, band centred on ``x``, band clamped
    right.
    """
    p, q, c = ogpm_params(eps)
    x = _check_x(x, UNIT)
    if x < c:
        l, r = 0.0, 2 * c
    elif x < 1 - c:
        l, r = x - c, x + c
    else:
        l, r = 1 - 2 * c, 1.0

    def cube(a, b):
        # int_a^b (y - x)^2 dy
        return ((b - x) ** 3 - (a - x) ** 3) / 3

    return q * cube(0.0, l) + p * cube(l, r) + q * cube(r, 1.0)


def circular_mse_closed_form(eps: float) -> float:
    """Squared arc error of the circular optimum; the same for every ``x``."""
    p, q, h = ogpm_circular_params(eps)
    return 2.0 / 3.0 * ((math.pi ** 3 - h ** 3) * q + h ** 3 * p)


def point_targeted_probability(eps: float, x0: float, metric: ErrorMetric,
                               seed: int = 0) -> tuple[float, float]:
    """Best 3-piece mechanism for the single input ``x0``.

    Returns:
        ``(p2, err)``: the central (highest) density and the achieved error.
    """
    from .solver import AtPoint, SolverProblem, solve_probabilities

    x0 = float(x0)
    if not 0.0 < x0 < 1.0:
        raise ValueError("x0 must lie strictly inside (0, 1)")
    sol = solve_probabilities(SolverProblem(UNIT, metric, 3, eps, AtPoint(x0)), seed=seed)
    if not sol.converged:
        raise RuntimeError(f"solver did not converge for eps={eps}, x0={x0}")
    return float(sol.pdf.densities.max()), float(sol.objective)


def write_curves_csv(curves: Iterable[ErrorCurve], fh: TextIO) -> int:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    n = 0
    for c in curves:
        for row in c.rows():
            w.writerow(row)
            n += 1
    return n


def read_curves_csv(fh: TextIO) -> list[ErrorCurve]:
    rows = list(csv.DictReader(fh))
    if rows and tuple(rows[0].keys()) != CSV_HEADER:
        raise ValueError(f"unexpected header {list(rows[0].keys())}")
    groups: dict[tuple, list] = {}
    for r in rows:
        key = (r["mechanism"], float(r["epsilon"]), r["metric"])
        groups.setdefault(key, []).append((float(r["x"]), float(r["err"])))
    return [ErrorCurve(m, e, ErrorMetric.parse(k), tuple(pts))
            for (m, e, k), pts in groups.items()]
