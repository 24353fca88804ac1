"""Closed-form mechanism catalog.

Each mechanism is exposed twice: as a plain ``f(eps, x) -> density``
function and as a :class:`MechanismSpec` in the registry, which also
carries domain metadata and a vectorised sampler used by the estimation
harness.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .core import (
    TWO_PI,
    Density,
    DomainError,
    ErrorMetric,
    Interval,
    PiecewiseDensity,
    Transform,
    TruncatedDensity,
    apply_transform,
    expected_error,
    rotate,
    truncate,
)

UNIT = Interval.unit()
CIRCLE = Interval.circle()
SYMMETRIC = Interval(-1.0, 1.0)
LAPLACE_GRID = 4096

Sampler = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not (eps > 0 and math.isfinite(eps)):
        raise ValueError(f"epsilon must be positive and finite, got {eps}")
    return eps


def _check_x(x: float, domain: Interval) -> float:
    x = float(x)
    if not domain.contains(x):
        raise DomainError(f"x={x} outside input domain {domain}")
    return x


# ---------------------------------------------------------------------------
# three-piece helpers


def _tpm_density(lo, hi, p, q, l, r, eps) -> PiecewiseDensity:
    return PiecewiseDensity(np.array([lo, l, r, hi]), np.array([q, p, q]),
                            Interval(lo, hi), epsilon=eps)


def _tpm_sample(lo, hi, p, q, l, r, u):
    """Inverse CDF of the low/high/low density; all arguments broadcast."""
    m_left = q * (l - lo)
    m_mid = p * (r - l)
    y_left = lo + u / q
    y_mid = l + (u - m_left) / p
    y_right = r + (u - m_left - m_mid) / q
    y = np.where(u < m_left, y_left, np.where(u < m_left + m_mid, y_mid, y_right))
    return np.clip(y, lo, hi)


# ---------------------------------------------------------------------------
# optimal mechanisms


def ogpm_params(eps: float) -> tuple[float, float, float]:
    """High density, low density and half-width ``C`` of the classical optimum."""
    eps = _check_eps(eps)
    p = math.exp(eps / 2)
    c = math.expm1(eps / 2) / (2 * math.expm1(eps))
    return p, p / math.exp(eps), c


def _ogpm_interval(c, x):
    x = np.asarray(x, dtype=float)
    l = np.where(x < c, 0.0, np.where(x < 1 - c, x - c, 1 - 2 * c))
    return l, l + 2 * c


def ogpm_classical(eps: float, x: float) -> PiecewiseDensity:
    """Worst-case optimal mechanism on ``[0, 1)`` (L1 and L2).

    The high-density band has width ``2C`` and follows ``x``, clamped at the
    domain ends.
    """
    p, q, c = ogpm_params(eps)
    x = _check_x(x, UNIT)
    l, r = _ogpm_interval(c, x)
    return _tpm_density(0.0, 1.0, p, q, float(l), float(r), eps)


def _ogpm_sampler(eps, x, u):
    p, q, c = ogpm_params(eps)
    l, r = _ogpm_interval(c, x)
    return _tpm_sample(0.0, 1.0, p, q, l, r, u)


def ogpm_circular_params(eps: float) -> tuple[float, float, float]:
    """High density, low density and arc half-width on ``[0, 2*pi)``."""
    eps = _check_eps(eps)
    p = math.exp(eps / 2) / TWO_PI
    h = math.pi * math.expm1(eps / 2) / math.expm1(eps)
    return p, p / math.exp(eps), h


def ogpm_circular(eps: float, x: float) -> PiecewiseDensity:
    """Optimal mechanism on the circle; the high arc ``[x-h, x+h)`` may wrap."""
    p, q, h = ogpm_circular_params(eps)
    x = _check_x(x, CIRCLE) % TWO_PI
    centred = PiecewiseDensity(np.array([0.0, math.pi - h, math.pi + h, TWO_PI]),
                               np.array([q, p, q]), CIRCLE, epsilon=eps)
    return rotate(centred, x - math.pi)


def _ogpm_circular_sampler(eps, x, u):
    p, q, h = ogpm_circular_params(eps)
    s = _tpm_sample(0.0, TWO_PI, p, q, math.pi - h, math.pi + h, u)
    return np.mod(s + np.asarray(x, dtype=float) - math.pi, TWO_PI)


def ogpm_unbiased_params(eps: float) -> tuple[float, float, float]:
    """High density, low density and ``C`` (output domain ``[-C, C+1)``)."""
    eps = _check_eps(eps)
    e2 = math.exp(eps / 2)
    c = (e2 + 1) / math.expm1(eps / 2)
    p = e2 / (2 * c + 1)
    return p, p / math.exp(eps), c


def _ogpm_unbiased_interval(c, x):
    x = np.asarray(x, dtype=float)
    l = (c + 1) / 2 * x - (3 * c + 1) * (c - 1) / (4 * c)
    r = (c + 1) / 2 * x + (c + 1) * (c - 1) / (4 * c)
    return l, r


def ogpm_unbiased(eps: float, x: float) -> PiecewiseDensity:
    """Optimal unbiased mechanism ``[0, 1) -> [-C, C+1)``; its mean is ``x``."""
    p, q, c = ogpm_unbiased_params(eps)
    x = _check_x(x, UNIT)
    l, r = _ogpm_unbiased_interval(c, x)
    return _tpm_density(-c, c + 1, p, q, float(l), float(r), eps)


def _ogpm_unbiased_sampler(eps, x, u):
    p, q, c = ogpm_unbiased_params(eps)
    l, r = _ogpm_unbiased_interval(c, x)
    return _tpm_sample(-c, c + 1, p, q, l, r, u)


# ---------------------------------------------------------------------------
# baselines


def pm_params(eps: float) -> tuple[float, float, float]:
    """High density, low density and output bound ``C`` of PM."""
    eps = _check_eps(eps)
    e2 = math.exp(eps / 2)
    c = (e2 + 1) / math.expm1(eps / 2)
    p = (math.exp(eps) - e2) / (2 * e2 + 2)
    return p, p / math.exp(eps), c


def _pm_interval(c, x):
    l = (c + 1) / 2 * np.asarray(x, dtype=float) - (c - 1) / 2
    return l, l + c - 1


def pm(eps: float, x: float) -> PiecewiseDensity:
    """Piecewise mechanism ``[-1, 1) -> [-C, C)``."""
    p, q, c = pm_params(eps)
    x = _check_x(x, SYMMETRIC)
    l, r = _pm_interval(c, x)
    return _tpm_density(-c, c, p, q, float(l), float(r), eps)


def _pm_sampler(eps, x, u):
    p, q, c = pm_params(eps)
    l, r = _pm_interval(c, x)
    return _tpm_sample(-c, c, p, q, l, r, u)


def sw_params(eps: float) -> tuple[float, float, float]:
    """High density, low density and band half-width ``b`` of SW."""
    eps = _check_eps(eps)
    e = math.exp(eps)
    b = (eps * e - e + 1) / (2 * e * (e - 1 - eps))
    p = e / (2 * b * e + 1)
    return p, 1 / (2 * b * e + 1), b


def sw(eps: float, x: float) -> PiecewiseDensity:
    """Square wave mechanism ``[0, 1) -> [-b, 1+b)``."""
    p, q, b = sw_params(eps)
    x = _check_x(x, UNIT)
    return _tpm_density(-b, 1 + b, p, q, x - b, x + b, eps)


def _sw_sampler(eps, x, u):
    p, q, b = sw_params(eps)
    x = np.asarray(x, dtype=float)
    return _tpm_sample(-b, 1 + b, p, q, x - b, x + b, u)


def staircase_expected_error(eps: float) -> float:
    """Whole-domain L1 error of the staircase mechanism (sensitivity 1)."""
    eps = _check_eps(eps)
    return math.exp(eps / 2) / math.expm1(eps)


def _laplace_cell_masses(eps: float, x: float, edges: np.ndarray) -> np.ndarray:
    """Exact ``int exp(-eps |y - x|) dy`` over each cell."""
    def prim(y):
        # antiderivative of exp(-eps|y-x|), continuous at y = x
        t = y - x
        return np.where(t < 0, np.exp(eps * t) - 1.0, 1.0 - np.exp(-eps * t)) / eps
    return np.diff(prim(edges))


def t_laplace(eps: float, x: float, grid: int = LAPLACE_GRID) -> TruncatedDensity:
    """Laplace(x, 1/eps) clamped to ``[0, 1]``.

    Atoms are exact. The interior is piecewise constant on ``grid`` cells,
    each carrying its exact Laplace mass.
    """
    eps = _check_eps(eps)
    x = _check_x(x, UNIT)
    lo_mass = 0.5 * math.exp(-eps * x)
    hi_mass = 0.5 * math.exp(-eps * (1 - x))
    edges = np.linspace(0.0, 1.0, grid + 1)
    masses = 0.5 * eps * _laplace_cell_masses(eps, x, edges)
    interior = PiecewiseDensity(edges, masses / masses.sum() / np.diff(edges), UNIT)
    return TruncatedDensity(UNIT, interior, lo_mass, hi_mass)


def _t_laplace_sampler(eps, x, u):
    x = np.asarray(x, dtype=float)
    u = np.clip(u, 1e-300, 1 - 1e-16)
    noise = np.where(u < 0.5, np.log(2 * u), -np.log(2 * (1 - u))) / eps
    return np.clip(x + noise, 0.0, 1.0)


def b_laplace_expected_error(eps: float, x: float) -> float:
    """Closed-form L1 error of the bounded Laplace density with ``b = 1/eps``.

    The closed form integrates against the unrenormalised density
    ``eps * exp(-eps |y - x|) / (1 - exp(-eps))``; it therefore agrees with
    :func:`b_laplace` exactly only at ``x`` in ``{0, 1}``.
    """
    eps = _check_eps(eps)
    x = _check_x(x, UNIT)
    num = 2 - (1 + eps * x) * math.exp(-eps * x) - (1 + eps * (1 - x)) * math.exp(-eps * (1 - x))
    return num / (eps * -math.expm1(-eps))


def b_laplace(eps: float, x: float, grid: int = LAPLACE_GRID) -> PiecewiseDensity:
    """Bounded Laplace on ``[0, 1)``, renormalised for each ``x``.

    Grid cells carry the exact mass of ``exp(-eps |y - x|)``.
    """
    eps = _check_eps(eps)
    x = _check_x(x, UNIT)
    edges = np.linspace(0.0, 1.0, grid + 1)
    masses = _laplace_cell_masses(eps, x, edges)
    return PiecewiseDensity(edges, masses / masses.sum() / np.diff(edges), UNIT, epsilon=eps)


def _b_laplace_sampler(eps, x, u):
    x = np.asarray(x, dtype=float)
    left = -np.expm1(-eps * x) / eps
    right = -np.expm1(-eps * (1 - x)) / eps
    t = u * (left + right)
    with np.errstate(invalid="ignore", divide="ignore"):
        y_left = x + np.log(eps * t + np.exp(-eps * x)) / eps
        y_right = x - np.log1p(-eps * np.maximum(t - left, 0.0)) / eps
    return np.clip(np.where(t < left, y_left, y_right), 0.0, 1.0)


# ---------------------------------------------------------------------------
# specs and combinators


@dataclass(frozen=True)
class MechanismSpec:
    """A named mechanism family ``(eps, x) -> output density``.

    Attributes:
        name: Registry name.
        input_domain: Domain of ``x``.
        output_domain_fn: Maps ``eps`` to the output domain.
        biased: Whether ``E[M(x)] != x`` in general.
        pdf_fn: ``(eps, x) -> density``; ``None`` for analytic-only entries.
        sampler: Vectorised ``(eps, x, u) -> y`` with uniform ``u``.
        worst_case: ``"endpoints"``, ``"antipode"`` or ``"grid"``; how the
            worst-case input is located.
        error_fn: Optional analytic ``(eps, metric, x) -> error``.
        ldp_pdf_fn: Density used for the privacy check when it differs from
            ``pdf_fn`` (the untruncated base of a truncated mechanism).
    """

    name: str
    input_domain: Interval
    output_domain_fn: Callable[[float], Interval]
    biased: bool
    pdf_fn: Optional[Callable[[float, float], Density]]
    sampler: Optional[Sampler] = None
    worst_case: str = "endpoints"
    error_fn: Optional[Callable[[float, ErrorMetric, float], float]] = None
    ldp_pdf_fn: Optional[Callable[[float, float], Density]] = None

    @property
    def supports_circular(self) -> bool:
        return self.input_domain.is_circular

    @property
    def analytic_only(self) -> bool:
        return self.pdf_fn is None

    def output_domain(self, eps: float) -> Interval:
        return self.output_domain_fn(_check_eps(eps))

    def pdf(self, eps: float, x: float) -> Density:
        if self.pdf_fn is None:
            raise ValueError(f"{self.name} is analytic-only and has no density")
        _check_eps(eps)
        _check_x(x, self.input_domain)
        return self.pdf_fn(eps, x)

    def ldp_pdf(self, eps: float, x: float) -> Density:
        if self.ldp_pdf_fn is not None:
            return self.ldp_pdf_fn(eps, x)
        return self.pdf(eps, x)

    def expected_error(self, eps: float, metric: ErrorMetric, x: float) -> float:
        if self.error_fn is not None:
            return self.error_fn(eps, metric, x)
        return expected_error(self.pdf(eps, x), metric, x)

    def perturb(self, eps: float, x, rng: np.random.Generator) -> np.ndarray:
        """Perturb every entry of ``x`` independently."""
        eps = _check_eps(eps)
        x = np.asarray(x, dtype=float)
        if not self.input_domain.contains(x):
            raise DomainError(f"inputs outside {self.input_domain}")
        u = rng.random(x.shape)
        if self.sampler is not None:
            return self.sampler(eps, x, u)
        if self.pdf_fn is None:
            raise ValueError(f"{self.name} is analytic-only and cannot be sampled")
        return np.array([self.pdf_fn(eps, xi).ppf(ui) for xi, ui in zip(x.ravel(), u.ravel())]
                        ).reshape(x.shape)


def compress(spec: MechanismSpec) -> MechanismSpec:
    """Map the output domain linearly onto the input domain.

    This is pure post-processing, so privacy is unchanged.
    """
    if spec.input_domain.is_circular or spec.pdf_fn is None:
        raise ValueError("compression needs a classical mechanism with a density")

    def t(eps):
        return Transform.between(spec.output_domain_fn(eps), spec.input_domain)

    def pdf_fn(eps, x):
        return apply_transform(spec.pdf_fn(eps, x), t(eps))

    sampler = None
    if spec.sampler is not None:
        def sampler(eps, x, u):
            return t(eps)(spec.sampler(eps, x, u))

    return replace(spec, name=f"{spec.name}-c", output_domain_fn=lambda eps: spec.input_domain,
                   biased=True, pdf_fn=pdf_fn, sampler=sampler, ldp_pdf_fn=None)


def rescale(spec: MechanismSpec, target: Interval) -> MechanismSpec:
    """Move a classical mechanism onto the input domain ``target``.

    Inputs and outputs go through the same affine map, so privacy and the
    error ordering between mechanisms are preserved.
    """
    if spec.input_domain.is_circular or target.is_circular:
        raise ValueError("rescale works on classical domains; use adapt for the circle")
    if spec.pdf_fn is None:
        raise ValueError("cannot rescale an analytic-only mechanism")
    t = Transform.between(spec.input_domain, target)
    inv = t.inverse()

    def move(d: Density) -> Density:
        if isinstance(d, TruncatedDensity):
            inner = None if d.interior is None else apply_transform(d.interior, t)
            return TruncatedDensity(t.apply_interval(d.domain), inner, d.lo_mass, d.hi_mass)
        return apply_transform(d, t)

    def pdf_fn(eps, x):
        return move(spec.pdf_fn(eps, float(inv(x))))

    ldp = None
    if spec.ldp_pdf_fn is not None:
        def ldp(eps, x):
            return move(spec.ldp_pdf_fn(eps, float(inv(x))))

    sampler = None
    if spec.sampler is not None:
        def sampler(eps, x, u):
            return t(spec.sampler(eps, inv(x), u))

    return replace(spec, input_domain=target,
                   output_domain_fn=lambda eps: t.apply_interval(spec.output_domain_fn(eps)),
                   pdf_fn=pdf_fn, sampler=sampler, ldp_pdf_fn=ldp)


def truncated(spec: MechanismSpec, name: str) -> MechanismSpec:
    """Clamp outputs of ``spec`` to its input domain."""
    dom = spec.input_domain

    def pdf_fn(eps, x):
        return truncate(spec.pdf_fn(eps, x), dom)

    sampler = None
    if spec.sampler is not None:
        def sampler(eps, x, u):
            return np.clip(spec.sampler(eps, x, u), dom.lo, dom.hi)

    return replace(spec, name=name, output_domain_fn=lambda eps: dom, biased=True,
                   pdf_fn=pdf_fn, sampler=sampler, worst_case="grid", ldp_pdf_fn=spec.pdf_fn)


def adapt(spec: MechanismSpec, domain: Interval) -> MechanismSpec:
    """Use a mechanism on ``domain``.

    On the circle the mechanism is applied to the angle as a plain number in
    ``[0, 2*pi)``; this requires the output domain to equal the input domain
    (compressed or truncated mechanisms).
    """
    if spec.input_domain == domain:
        return spec
    if not domain.is_circular:
        return rescale(spec, domain)
    if spec.input_domain.is_circular:
        return spec
    if spec.output_domain_fn(1.0) != spec.input_domain:
        raise ValueError(f"{spec.name} has an enlarged output domain and cannot act on the circle")
    flat = rescale(spec, domain.as_classical())

    def pdf_fn(eps, x):
        d = flat.pdf_fn(eps, x)
        if isinstance(d, TruncatedDensity) or d.domain != domain.as_classical():
            raise ValueError(f"{spec.name} does not map the circle onto itself")
        return PiecewiseDensity(d.edges, d.densities, domain, d.epsilon)

    sampler = None
    if flat.sampler is not None:
        def sampler(eps, x, u):
            return np.mod(flat.sampler(eps, x, u), TWO_PI)

    return replace(flat, input_domain=domain, output_domain_fn=lambda eps: domain,
                   pdf_fn=pdf_fn, sampler=sampler, worst_case="grid", ldp_pdf_fn=None)


def identity(domain: Interval = UNIT) -> MechanismSpec:
    """Pass-through (no privacy); a test fixture for estimators."""
    return MechanismSpec("identity", domain, lambda eps: domain, False, None,
                         sampler=lambda eps, x, u: np.asarray(x, dtype=float).copy())


OGPM = MechanismSpec("ogpm", UNIT, lambda eps: UNIT, True, ogpm_classical, _ogpm_sampler)
OGPM_CIRCULAR = MechanismSpec("ogpm-circular", CIRCLE, lambda eps: CIRCLE, True, ogpm_circular,
                              _ogpm_circular_sampler, worst_case="antipode")
OGPM_U = MechanismSpec("ogpm-u", UNIT,
                       lambda eps: Interval(-ogpm_unbiased_params(eps)[2],
                                            ogpm_unbiased_params(eps)[2] + 1),
                       False, ogpm_unbiased, _ogpm_unbiased_sampler)
PM = MechanismSpec("pm", SYMMETRIC, lambda eps: Interval(-pm_params(eps)[2], pm_params(eps)[2]),
                   False, pm, _pm_sampler)
SW = MechanismSpec("sw", UNIT, lambda eps: Interval(-sw_params(eps)[2], 1 + sw_params(eps)[2]),
                   True, sw, _sw_sampler)


def _staircase_error(eps, metric, x):
    if metric.power != 1:
        raise ValueError("the staircase error is only available for L1")
    return staircase_expected_error(eps)


STAIRCASE = MechanismSpec("staircase", UNIT, lambda eps: UNIT, False, None,
                          error_fn=_staircase_error)
T_LAPLACE = MechanismSpec("t-laplace", UNIT, lambda eps: UNIT, True, t_laplace,
                          _t_laplace_sampler, worst_case="grid")
B_LAPLACE = MechanismSpec("b-laplace", UNIT, lambda eps: UNIT, True, b_laplace,
                          _b_laplace_sampler, worst_case="grid")

_PM01 = rescale(PM, UNIT)

REGISTRY: dict[str, MechanismSpec] = {
    "ogpm": OGPM,
    "ogpm-circular": OGPM_CIRCULAR,
    "ogpm-u": OGPM_U,
    "pm": PM,
    "sw": SW,
    "pm-c": replace(rescale(compress(PM), UNIT), name="pm-c"),
    "sw-c": compress(SW),
    "t-pm": truncated(_PM01, "t-pm"),
    "t-sw": truncated(SW, "t-sw"),
    "t-laplace": T_LAPLACE,
    "b-laplace": B_LAPLACE,
    "staircase": STAIRCASE,
}


def get_mechanism(name: str, domain: Interval | None = None) -> MechanismSpec:
    """Look up a registry entry, optionally adapted to ``domain``.

    ``ogpm`` on a circular domain resolves to ``ogpm-circular``.
    """
    key = name.strip().lower()
    if key not in REGISTRY:
        raise ValueError(f"unknown mechanism {name!r}; known: {', '.join(REGISTRY)}")
    spec = REGISTRY[key]
    if domain is None:
        return spec
    if domain.is_circular and key == "ogpm":
        return OGPM_CIRCULAR
    return adapt(spec, domain)
