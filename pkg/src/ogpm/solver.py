"""Numerical derivation of optimal piecewise mechanisms.

The worst-case problem is reduced to minimising the error at a single
input: the left endpoint on a classical domain, ``pi`` on the circle (all
points are equivalent there). Piece densities are parametrised by
unnormalised levels ``rho_i`` in ``[exp(-eps/2), exp(eps/2)]``, which keeps
every ratio within ``exp(eps)``; dividing by the total mass removes the
normalisation constraint. Cut positions are free in the domain and sorted.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .core import (
    TWO_PI,
    ErrorMetric,
    Interval,
    PiecewiseDensity,
    _antiderivative,
    expected_error,
    merge_pieces,
    rotate,
)

__all__ = [
    "WorstCase", "AtPoint", "SolverProblem", "SolverSolution", "solve_probabilities",
    "solve_intervals", "merge_pieces", "verify_optimal_m", "VerifyReport",
    "fit_closed_form", "FitResult", "FEATURES",
]

AGREE_TOL = 1e-6
LEVEL_WIDTH_TOL = 1e-7
STRUCT_TOL = 1e-3
SLIVER = 1e-4


@dataclass(frozen=True)
class WorstCase:
    pass


@dataclass(frozen=True)
class AtPoint:
    x: float


Target = Union[WorstCase, AtPoint]


@dataclass(frozen=True)
class SolverProblem:
    """One m-piece min-error instance.

    ``domain`` is both input and output domain unless ``output_domain`` is
    given, which is required (and must be strictly larger) when
    ``unbiased`` is set.
    """

    domain: Interval
    metric: ErrorMetric
    m: int
    epsilon: float
    target: Target = field(default_factory=WorstCase)
    unbiased: bool = False
    output_domain: Optional[Interval] = None

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError("epsilon must be positive")
        if isinstance(self.target, AtPoint) and not self.domain.contains(self.target.x):
            raise ValueError(f"target x={self.target.x} outside {self.domain}")
        if self.unbiased:
            out = self.output_domain
            if out is None or self.domain.is_circular:
                raise ValueError("unbiased problems need a classical output_domain")
            if not (out.lo < self.domain.lo and out.hi > self.domain.hi):
                raise ValueError("output_domain must strictly contain the input domain")
        elif self.output_domain is not None and self.output_domain != self.domain:
            raise ValueError("an enlarged output_domain is only supported for unbiased problems")

    @property
    def out(self) -> Interval:
        return self.output_domain if self.output_domain is not None else self.domain

    def solve_point(self) -> float:
        """The input at which the error is minimised."""
        if isinstance(self.target, AtPoint):
            return float(self.target.x)
        if self.domain.is_circular:
            return math.pi
        return self.domain.lo


@dataclass(frozen=True, eq=False)
class SolverSolution:
    """Optimised mechanism at ``x``.

    ``levels`` holds the distinct densities (pieces of negligible width
    excluded); they are the x-independent probabilities reused by
    :func:`solve_intervals`.
    """

    pdf: PiecewiseDensity
    objective: float
    converged: bool
    iterations: int
    x: float
    levels: tuple[float, ...] = ()


# ---------------------------------------------------------------------------
# objective


def _g(t, k):
    return np.abs(t) ** k


def _objective(rho, edges, x, k):
    """Error at ``x`` and its gradient in ``rho`` and in interior edges."""
    w = np.diff(edges)
    gp = _antiderivative(edges - x, k)
    dG = np.diff(gp)
    s = rho @ w
    n = rho @ dG
    err = n / s
    d_rho = (dG - err * w) / s
    inner = edges[1:-1]
    d_edge = (rho[:-1] - rho[1:]) * (_g(inner - x, k) - err) / s
    return err, d_rho, d_edge


def _edges_from(t, lo, length):
    order = np.argsort(t, kind="stable")
    return np.concatenate([[lo], lo + length * t[order], [lo + length]]), order


def _levels(pdf: PiecewiseDensity, width_tol: float) -> tuple[float, ...]:
    keep = pdf.widths > width_tol * pdf.domain.length
    vals = np.sort(pdf.densities[keep])[::-1]
    out: list[float] = []
    for v in vals:
        if not out or abs(v - out[-1]) > 1e-6 * max(1.0, v):
            out.append(float(v))
    return tuple(out)


def _warm_start(problem: SolverProblem, x: float, lo: float, length: float):
    """Three-piece closed-form shape as a start vector."""
    m, eps = problem.m, problem.epsilon
    hi_l, lo_l = math.exp(eps / 2), math.exp(-eps / 2)
    half = length * math.expm1(eps / 2) / (2 * math.expm1(eps))
    a = min(max(x - half, lo), lo + length - 2 * half)
    cuts = [a, a + 2 * half]
    rho = [lo_l, hi_l, lo_l]
    while len(cuts) < m - 1:
        cuts.append(lo + length)
        rho.append(lo_l)
    rho, cuts = rho[:m], cuts[:m - 1]
    t = (np.array(cuts) - lo) / length
    return np.concatenate([rho, np.clip(t, 0.0, 1.0)])


def _mean_constraint(problem, x, lo, length):
    def c(v):
        m = problem.m
        rho, t = v[:m], v[m:]
        e, _ = _edges_from(t, lo, length)
        s = rho @ np.diff(e)
        return rho @ (np.diff(e ** 2) / 2) / s - x
    return c


def solve_probabilities(problem: SolverProblem, n_starts: int = 32, seed: int = 0,
                        ) -> SolverSolution:
    """Jointly optimise densities and cut positions.

    Args:
        problem: The instance; its target fixes where the error is minimised.
        n_starts: Latin-hypercube starts (at least 32) on top of a
            three-piece warm start.
        seed: Seed for the start design.

    Returns:
        The best solution. ``converged`` is set when the two best starts agree
        within ``1e-6``.
    """
    n_starts = max(int(n_starts), 32)
    m, eps, k = problem.m, problem.epsilon, problem.metric.power
    out = problem.out
    lo, length = out.lo, out.length
    x = problem.solve_point()
    # on the circle the arc distance to pi is the plain distance on [0, 2pi)
    bounds = [(math.exp(-eps / 2), math.exp(eps / 2))] * m + [(0.0, 1.0)] * (m - 1)

    def fun(v):
        rho, t = v[:m], v[m:]
        edges, order = _edges_from(t, lo, length)
        err, d_rho, d_edge = _objective(rho, edges, x, k)
        d_t = np.empty(m - 1)
        d_t[order] = d_edge * length
        return err, np.concatenate([d_rho, d_t])

    sampler = qmc.LatinHypercube(d=2 * m - 1, seed=np.random.default_rng(seed))
    lb = np.array([b[0] for b in bounds])
    ub = np.array([b[1] for b in bounds])
    starts = [_warm_start(problem, x if not problem.unbiased else problem.domain.lo, lo, length)]
    starts += list(qmc.scale(sampler.random(n_starts), lb, ub))

    results = []
    iterations = 0
    for v0 in starts:
        if problem.unbiased:
            res = optimize.minimize(fun, v0, jac=True, method="SLSQP", bounds=bounds,
                                    constraints=[{"type": "eq", "fun": _mean_constraint(
                                        problem, x, lo, length)}],
                                    options={"maxiter": 500, "ftol": 1e-13})
            if abs(_mean_constraint(problem, x, lo, length)(res.x)) > 1e-9:
                iterations += int(res.nit)
                continue
        else:
            res = optimize.minimize(fun, v0, jac=True, method="L-BFGS-B", bounds=bounds,
                                    options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-11})
        iterations += int(res.nit)
        results.append((float(res.fun), tuple(np.round(res.x, 12)), res.x))
    if not results:
        raise RuntimeError("no start satisfied the constraints")
    results.sort(key=lambda r: (r[0], r[1]))
    converged = len(results) > 1 and results[1][0] - results[0][0] <= AGREE_TOL

    best = results[0][2]
    rho, t = best[:m], best[m:]
    edges, _ = _edges_from(t, lo, length)
    dens = rho / (rho @ np.diff(edges))
    pdf = PiecewiseDensity(edges, dens, Interval(out.lo, out.hi), epsilon=eps)
    if problem.domain.is_circular:
        pdf = PiecewiseDensity(pdf.edges, pdf.densities, problem.domain, eps)
    return SolverSolution(pdf, expected_error(pdf, problem.metric, x), converged, iterations, x,
                          _levels(pdf, LEVEL_WIDTH_TOL))


# ---------------------------------------------------------------------------
# interval placement with fixed levels


def _sequences(levels: Sequence[float], m: int):
    """Spatial level orders of length <= m without equal neighbours."""
    idx = range(len(levels))
    for n in range(1, m + 1):
        for seq in itertools.product(idx, repeat=n):
            if all(a != b for a, b in zip(seq, seq[1:])):
                yield [levels[i] for i in seq]


def _place(p, lo, length, x, k, mean_target, rng, n_random=3):
    """Best widths for the level order ``p``; ``None`` if infeasible."""
    p = np.asarray(p, dtype=float)
    if not (p.min() * length <= 1 + 1e-12 and p.max() * length >= 1 - 1e-12):
        return None
    nseg = len(p)
    if nseg == 1:
        w = np.array([length])
        e = np.array([lo, lo + length])
        return float(p @ np.diff(_antiderivative(e - x, k))), w, 0

    def fun(w):
        e = lo + np.concatenate([[0.0], np.cumsum(w)])
        val = p @ np.diff(_antiderivative(e - x, k))
        ge = _g(e[1:] - x, k)
        d_e = np.empty(nseg)
        d_e[:-1] = (p[:-1] - p[1:]) * ge[:-1]
        d_e[-1] = p[-1] * ge[-1]
        return val, np.cumsum(d_e[::-1])[::-1]

    cons = [{"type": "eq", "fun": lambda w: np.sum(w) - length,
             "jac": lambda w: np.ones(nseg)},
            {"type": "eq", "fun": lambda w: p @ w - 1.0, "jac": lambda w: p}]
    if mean_target is not None:
        def mean_c(w):
            e = lo + np.concatenate([[0.0], np.cumsum(w)])
            return p @ np.diff(e ** 2) / 2 - mean_target
        cons.append({"type": "eq", "fun": mean_c})
    starts = [np.full(nseg, length / nseg)] + [rng.dirichlet(np.ones(nseg)) * length
                                               for _ in range(n_random)]
    best = None
    nit = 0
    for w0 in starts:
        res = optimize.minimize(fun, w0, jac=True, method="SLSQP",
                                bounds=[(0.0, length)] * nseg, constraints=cons,
                                options={"maxiter": 300, "ftol": 1e-14})
        nit += int(res.nit)
        w = np.clip(res.x, 0.0, length)
        viol = max(abs(c["fun"](w)) for c in cons)
        if viol > 1e-8:
            continue
        val = float(fun(w)[0])
        if best is None or val < best[0] - 1e-13:
            best = (val, w)
    if best is None:
        return None
    return best[0], best[1], nit


def solve_intervals(problem: SolverProblem, fixed_probs: Sequence[float], x: float,
                    seed: int = 0) -> SolverSolution:
    """Place pieces for input ``x`` given x-independent densities.

    Every spatial order of the given levels with at most ``problem.m`` pieces
    is tried; widths are optimised under the length and mass constraints
    (plus the mean constraint for unbiased problems). The lowest error wins;
    ties keep the order with fewer pieces.
    """
    levels = [float(v) for v in fixed_probs]
    if not levels or min(levels) <= 0:
        raise ValueError("fixed_probs must be positive densities")
    if max(levels) / min(levels) > math.exp(problem.epsilon) * (1 + 1e-9):
        raise ValueError("fixed_probs violate the exp(eps) ratio bound")
    dom = problem.domain
    if not dom.contains(x):
        raise ValueError(f"x={x} outside {dom}")
    out = problem.out
    lo, length, k = out.lo, out.length, problem.metric.power
    at = math.pi if dom.is_circular else float(x)
    mean_target = float(x) if problem.unbiased else None
    rng = np.random.default_rng(seed)

    best = None
    total_it = 0
    for seq in _sequences(levels, problem.m):
        r = _place(seq, lo, length, at, k, mean_target, rng)
        if r is None:
            continue
        total_it += r[2]
        if best is None or r[0] < best[0] - 1e-10:
            best = (r[0], seq, r[1])
    if best is None:
        raise RuntimeError("no feasible arrangement of the given densities")
    _, seq, w = best
    edges = lo + np.concatenate([[0.0], np.cumsum(w)])
    # renormalise away the solver's residual mass error
    dens = np.asarray(seq) / (np.asarray(seq) @ np.diff(edges))
    pdf = PiecewiseDensity(edges, dens, Interval(out.lo, out.hi), epsilon=problem.epsilon)
    if dom.is_circular:
        pdf = rotate(PiecewiseDensity(pdf.edges, pdf.densities, dom, problem.epsilon),
                     float(x) - math.pi)
    return SolverSolution(pdf, expected_error(pdf, problem.metric, x), True, total_it,
                          float(x), tuple(sorted(set(levels), reverse=True)))


# ---------------------------------------------------------------------------
# optimal piece number


@dataclass(frozen=True)
class VerifyReport:
    m: int
    n_samples: int
    all_equal: bool
    failures: tuple[tuple[float, float], ...]
    unconverged: tuple[tuple[float, float], ...]

    def summary(self) -> str:
        status = "PASS" if self.all_equal else "FAIL"
        return (f"{status} m={self.m} samples={self.n_samples} mismatches={len(self.failures)} "
                f"unconverged={len(self.unconverged)}")


def _structure(pdf: PiecewiseDensity, sliver: float = SLIVER):
    """(density, left, right) rows with slivers removed and neighbours merged."""
    rows = [(p.density, p.left, p.right) for p in pdf.pieces
            if p.width > sliver * pdf.domain.length]
    merged: list[list[float]] = []
    for d, l, r in rows:
        if merged and abs(merged[-1][0] - d) <= STRUCT_TOL * max(1.0, d):
            merged[-1][2] = r
        else:
            merged.append([d, l, r])
    return merged


def _same_structure(a: PiecewiseDensity, b: PiecewiseDensity) -> bool:
    sa, sb = _structure(a), _structure(b)
    if len(sa) != len(sb):
        return False
    scale = a.domain.length
    for (da, la, ra), (db, lb, rb) in zip(sa, sb):
        if abs(da - db) > STRUCT_TOL * max(1.0, da):
            return False
        if abs(la - lb) > STRUCT_TOL * scale or abs(ra - rb) > STRUCT_TOL * scale:
            return False
    return True


def verify_optimal_m(domain: Interval, metric: ErrorMetric, m: int, n_samples: int,
                     eps_range: tuple[float, float] = (0.05, 10.0), seed: int = 0,
                     progress: Optional[Callable[[int], None]] = None) -> VerifyReport:
    """Monte Carlo check that ``m + 1`` pieces give nothing over ``m``.

    For each random ``(eps, x)``: solve the worst-case levels with ``m`` and
    ``m + 1`` pieces, place them at ``x``, merge redundant pieces and compare
    the two mechanisms piece by piece.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    failures, unconverged = [], []
    lo_e, hi_e = eps_range
    for i in range(n_samples):
        eps = float(rng.uniform(lo_e, hi_e))
        x = float(rng.uniform(domain.lo, domain.hi))
        sols = []
        ok = True
        for mm in (m, m + 1):
            prob = SolverProblem(domain, metric, mm, eps)
            lev = solve_probabilities(prob, seed=seed + i)
            if not lev.converged:
                ok = False
                break
            sols.append(merge_pieces(solve_intervals(prob, lev.levels, x, seed=seed + i).pdf))
        if not ok:
            unconverged.append((eps, x))
        elif not _same_structure(*sols):
            failures.append((eps, x))
        if progress is not None:
            progress(i + 1)
    return VerifyReport(m, n_samples, not failures, tuple(failures), tuple(unconverged))


# ---------------------------------------------------------------------------
# closed-form regression


@dataclass(frozen=True)
class Feature:
    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray, np.ndarray], np.ndarray]
    init: tuple[float, float]


FEATURES = {
    "exp-half": Feature(
        "exp-half",
        lambda b, e: np.exp(b[0] * e) + b[1],
        lambda b, e: np.column_stack([e * np.exp(b[0] * e), np.ones_like(e)]),
        (0.3, 0.0)),
    "affine": Feature(
        "affine",
        lambda b, e: b[0] * e + b[1],
        lambda b, e: np.column_stack([e, np.ones_like(e)]),
        (0.0, 0.0)),
    "power-law": Feature(
        "power-law",
        lambda b, e: b[0] * e ** b[1],
        lambda b, e: np.column_stack([e ** b[1], b[0] * e ** b[1] * np.log(e)]),
        (1.0, 1.0)),
}


@dataclass(frozen=True)
class FitResult:
    feature: str
    beta: tuple[float, ...]
    max_residual: float
    success: bool
    message: str = ""


def fit_closed_form(samples: Sequence[tuple[float, float]], feature: str = "exp-half",
                    ) -> FitResult:
    """Levenberg-Marquardt fit of ``value ~ f(eps; beta)``.

    A rank-deficient Jacobian at the solution is reported as a failed fit
    rather than returning arbitrary parameters.
    """
    if feature not in FEATURES:
        raise ValueError(f"unknown feature {feature!r}; known: {', '.join(FEATURES)}")
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or len(data) < 3:
        raise ValueError("need at least 3 (eps, value) samples")
    f = FEATURES[feature]
    e, y = data[:, 0], data[:, 1]
    if feature == "power-law" and np.any(e <= 0):
        raise ValueError("power-law fits need positive eps")

    def resid(b):
        return f.fn(b, e) - y

    def jac(b):
        return f.jac(b, e)

    try:
        res = optimize.least_squares(resid, f.init, jac=jac, method="lm", xtol=1e-10,
                                     ftol=1e-15, gtol=1e-15, max_nfev=10000)
    except (ValueError, np.linalg.LinAlgError) as exc:
        return FitResult(feature, (math.nan, math.nan), math.inf, False, str(exc))
    J = jac(res.x)
    if not np.all(np.isfinite(J)) or np.linalg.matrix_rank(J) < J.shape[1]:
        return FitResult(feature, tuple(map(float, res.x)), math.inf, False, "singular Jacobian")
    return FitResult(feature, tuple(map(float, res.x)), float(np.max(np.abs(res.fun))),
                     bool(res.success), str(res.message))
