"""Two-dimensional polar mechanism with a split privacy budget.

The radius in ``[0, d)`` goes through the classical optimum rescaled to
``[0, d)``; the angle goes through the circular optimum. The combined
loss is squared radius error plus squared arc error.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import TextIO

import numpy as np
from scipy import optimize

from .analytics import circular_mse_closed_form, mse_closed_form_classical
from .core import TWO_PI
from .mechanisms import _ogpm_circular_sampler, _ogpm_sampler

SPLIT_TOL = 1e-6


@dataclass(frozen=True)
class PolarPoint:
    radius: float
    angle: float
    d: float = 1.0

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError("d must be positive")
        if not 0.0 <= self.radius <= self.d:
            raise ValueError(f"radius {self.radius} outside [0, {self.d})")
        if not 0.0 <= self.angle <= TWO_PI:
            raise ValueError(f"angle {self.angle} outside [0, 2*pi)")


@dataclass(frozen=True)
class BudgetSplit:
    eps1: float
    eps2: float
    total: float

    def __post_init__(self):
        if self.eps1 < 0 or self.eps2 < 0:
            raise ValueError("budget shares must be non-negative")
        if abs(self.eps1 + self.eps2 - self.total) > 1e-9:
            raise ValueError("eps1 + eps2 must equal total")

    @classmethod
    def from_eps1(cls, eps1: float, total: float) -> "BudgetSplit":
        eps1 = min(max(float(eps1), 0.0), float(total))
        return cls(eps1, float(total) - eps1, float(total))


def radius_error(eps1: float, d: float = 1.0) -> float:
    """Worst-case squared radius error; ``eps1 = 0`` is the uniform limit ``d^2/3``."""
    if eps1 < 0:
        raise ValueError("eps1 must be non-negative")
    if eps1 == 0:
        return d * d / 3.0
    return d * d * mse_closed_form_classical(eps1, 0.0)


def angle_error(eps2: float) -> float:
    """Squared arc error (the same at every angle); ``eps2 = 0`` gives ``pi^2/3``."""
    if eps2 < 0:
        raise ValueError("eps2 must be non-negative")
    if eps2 == 0:
        return math.pi ** 2 / 3.0
    return circular_mse_closed_form(eps2)


def total_error(eps1: float, total: float, d: float = 1.0) -> float:
    eps1 = min(max(eps1, 0.0), total)
    return radius_error(eps1, d) + angle_error(total - eps1)


def optimal_budget_split(eps_total: float, d: float = 1.0) -> BudgetSplit:
    """Share of ``eps_total`` for the radius that minimises the summed worst-case error."""
    if not eps_total > 0:
        raise ValueError("eps_total must be positive")
    if not d > 0:
        raise ValueError("d must be positive")
    res = optimize.minimize_scalar(total_error, bounds=(0.0, eps_total), method="bounded",
                                   args=(eps_total, d), options={"xatol": SPLIT_TOL})
    # the bounded search never lands exactly on a bound; compare with both ends
    cands = [(total_error(e, eps_total, d), e) for e in (float(res.x), 0.0, eps_total)]
    return BudgetSplit.from_eps1(min(cands)[1], eps_total)


def budget_error_curve(eps_total: float, d: float = 1.0, n: int = 1001):
    """``(eps1, total_error)`` pairs on an even grid over ``[0, eps_total]``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return [(float(e), total_error(float(e), eps_total, d))
            for e in np.linspace(0.0, eps_total, n)]


def write_budget_curve_csv(rows, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("epsilon1", "total_error"))
    for e, err in rows:
        w.writerow((repr(e), repr(err)))


def perturb_polar_many(radius, angle, split: BudgetSplit, d: float,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`perturb_polar`; a zero share yields uniform output."""
    radius = np.asarray(radius, dtype=float)
    angle = np.asarray(angle, dtype=float)
    u1, u2 = rng.random(radius.shape), rng.random(angle.shape)
    if split.eps1 == 0:
        r = d * u1
    else:
        r = d * _ogpm_sampler(split.eps1, radius / d, u1)
    if split.eps2 == 0:
        a = TWO_PI * u2
    else:
        a = _ogpm_circular_sampler(split.eps2, angle, u2)
    return np.clip(r, 0.0, d), np.mod(a, TWO_PI)


def perturb_polar(pt: PolarPoint, split: BudgetSplit, seed=None) -> PolarPoint:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    r, a = perturb_polar_many(np.array([pt.radius]), np.array([pt.angle]), split, pt.d, rng)
    return PolarPoint(float(r[0]), float(a[0]), pt.d)
