"""Independent reference computations.

Nothing here imports the package: densities are re-derived pointwise from
their formulas and integrated by brute-force quadrature.
"""
import math

import numpy as np

PANELS = 10**6


def trapezoid(f, lo, hi, panels=PANELS):
    y = np.linspace(lo, hi, panels + 1)
    return float(np.trapezoid(f(y), y))


def ogpm_pdf(eps, x):
    p = math.exp(eps / 2)
    q = p / math.exp(eps)
    c = (math.exp(eps / 2) - 1) / (2 * math.exp(eps) - 2)
    if x < c:
        l, r = 0.0, 2 * c
    elif x < 1 - c:
        l, r = x - c, x + c
    else:
        l, r = 1 - 2 * c, 1.0
    return lambda y: np.where((y >= l) & (y < r), p, q)


def sw_pdf(eps, x):
    e = math.exp(eps)
    b = (eps * e - e + 1) / (2 * e * (e - 1 - eps))
    p = e / (2 * b * e + 1)
    q = 1 / (2 * b * e + 1)
    return (lambda y: np.where(np.abs(y - x) <= b, p, q)), -b, 1 + b


def circular_pdf(eps, x):
    p = math.exp(eps / 2) / (2 * math.pi)
    q = p / math.exp(eps)
    h = math.pi * (math.exp(eps / 2) - 1) / (math.exp(eps) - 1)

    def f(y):
        d = np.abs(y - x) % (2 * math.pi)
        d = np.minimum(d, 2 * math.pi - d)
        return np.where(d < h, p, q)
    return f


def arc(y, x):
    d = np.abs(y - x) % (2 * math.pi)
    return np.minimum(d, 2 * math.pi - d)


def error(f, x, power, lo, hi, panels=PANELS):
    return trapezoid(lambda y: np.abs(y - x) ** power * f(y), lo, hi, panels)


def circular_error(f, x, power, panels=PANELS):
    return trapezoid(lambda y: arc(y, x) ** power * f(y), 0.0, 2 * math.pi, panels)


def pieces_error(edges, dens, x, power, panels=PANELS):
    edges = np.asarray(edges)
    dens = np.asarray(dens)

    def f(y):
        idx = np.clip(np.searchsorted(edges, y, side="right") - 1, 0, len(dens) - 1)
        return dens[idx]
    return error(f, x, power, edges[0], edges[-1], panels)


def b_laplace_unnormalised_pdf(eps, x):
    # fixed normaliser, as in the closed-form error expression
    return lambda y: eps * np.exp(-eps * np.abs(y - x)) / (1 - math.exp(-eps))


def laplace_clamped_l1(eps, x, panels=PANELS):
    """E|clip(x + Lap(1/eps), 0, 1) - x| by quadrature of the interior plus exact atoms."""
    interior = trapezoid(lambda y: np.abs(y - x) * 0.5 * eps * np.exp(-eps * np.abs(y - x)),
                         0.0, 1.0, panels)
    return interior + 0.5 * math.exp(-eps * x) * x + 0.5 * math.exp(-eps * (1 - x)) * (1 - x)


def unit_worst_l_p(eps, power, grid=200001):
    """Best two-level error at x=0 by direct 1-D search over the high band width."""
    a = np.linspace(1e-6, 1 - 1e-6, grid)
    e = math.exp(eps)
    # high level P, low P/e; normalisation fixes P
    P = 1.0 / (a + (1 - a) / e)
    err = P * (a ** (power + 1) + (1 - a ** (power + 1)) / e) / (power + 1)
    i = int(np.argmin(err))
    return float(err[i]), float(P[i])
