"""Domains, piecewise-constant densities and exact error evaluation.

Everything here is immutable. Densities are stored as flat numpy arrays
(edges and per-piece density) so that evaluation, integration and
inverse-CDF sampling are all vectorised.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

TWO_PI = 2.0 * math.pi

NORMALIZATION_TOL = 1e-9
RATIO_TOL = 1e-9
# pieces narrower than this (relative to the domain length) are dropped
_ZERO_WIDTH = 1e-14


class DomainError(ValueError):
    """An argument lies outside the domain it is required to be in."""


class Topology(enum.Enum):
    CLASSICAL = "classical"
    CIRCULAR = "circular"


@dataclass(frozen=True)
class Interval:
    """Bounded domain ``[lo, hi)``.

    Circular intervals are always stored as ``[0, 2*pi)``; any input whose
    length is ``2*pi`` is rotated onto that canonical form.
    """

    lo: float
    hi: float
    topology: Topology = Topology.CLASSICAL

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
            raise ValueError(f"invalid interval [{lo}, {hi})")
        if self.topology is Topology.CIRCULAR:
            if not math.isclose(hi - lo, TWO_PI, rel_tol=1e-12):
                raise ValueError("circular intervals must have length 2*pi")
            lo, hi = 0.0, TWO_PI
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unit(cls) -> "Interval":
        return cls(0.0, 1.0)

    @classmethod
    def circle(cls) -> "Interval":
        return cls(0.0, TWO_PI, Topology.CIRCULAR)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def is_circular(self) -> bool:
        return self.topology is Topology.CIRCULAR

    def contains(self, v, tol: float = 1e-12) -> bool:
        # the right endpoint is accepted: [a, b) and [a, b] coincide in practice
        v = np.asarray(v, dtype=float)
        slack = tol * max(1.0, self.length)
        return bool(np.all((v >= self.lo - slack) & (v <= self.hi + slack)))

    def contains_interval(self, other: "Interval", tol: float = 1e-12) -> bool:
        return self.contains(other.lo, tol) and self.contains(other.hi, tol)

    def as_classical(self) -> "Interval":
        return Interval(self.lo, self.hi)

    def as_circular(self) -> "Interval":
        return Interval(self.lo, self.hi, Topology.CIRCULAR)

    def __str__(self):
        tag = "circular" if self.is_circular else "classical"
        return f"[{self.lo:g}, {self.hi:g}) {tag}"


@dataclass(frozen=True)
class Piece:
    density: float
    left: float
    right: float

    def __post_init__(self):
        if self.density < 0:
            raise ValueError(f"negative density {self.density}")
        if self.right < self.left:
            raise ValueError(f"piece has right < left: [{self.left}, {self.right})")

    @property
    def width(self) -> float:
        return self.right - self.left

    @property
    def mass(self) -> float:
        return self.density * self.width


@dataclass(frozen=True)
class ErrorMetric:
    """``|y - x|**power``; on circular domains the shorter arc is used."""

    power: int = 1

    def __post_init__(self):
        if int(self.power) != self.power or self.power < 1:
            raise ValueError("power must be a positive integer")
        object.__setattr__(self, "power", int(self.power))

    @classmethod
    def parse(cls, text: str) -> "ErrorMetric":
        t = text.strip().lower()
        if t in ("l1", "abs", "mae"):
            return cls(1)
        if t in ("l2", "sq", "mse"):
            return cls(2)
        if t.startswith("l") and t[1:].isdigit():
            return cls(int(t[1:]))
        raise ValueError(f"unknown metric {text!r}")

    @property
    def name(self) -> str:
        return f"l{self.power}"

    def __str__(self):
        return self.name


L1 = ErrorMetric(1)
L2 = ErrorMetric(2)


@dataclass(frozen=True)
class Transform:
    """Affine map ``v -> scale * v + shift`` with ``scale > 0``."""

    scale: float
    shift: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("transform scale must be positive")

    def __call__(self, v):
        return self.scale * np.asarray(v, dtype=float) + self.shift

    def inverse(self) -> "Transform":
        return Transform(1.0 / self.scale, -self.shift / self.scale)

    def apply_interval(self, iv: Interval) -> Interval:
        return Interval(self.scale * iv.lo + self.shift, self.scale * iv.hi + self.shift,
                        iv.topology)

    @classmethod
    def between(cls, src: Interval, dst: Interval) -> "Transform":
        """The increasing affine map taking ``src`` onto ``dst``."""
        c = dst.length / src.length
        return cls(c, dst.lo - c * src.lo)


def _antiderivative(t: np.ndarray, power: int) -> np.ndarray:
    # d/dt [sign(t)|t|^(k+1)/(k+1)] = |t|^k
    return np.sign(t) * np.abs(t) ** (power + 1) / (power + 1)


def _rotate(edges: np.ndarray, dens: np.ndarray, shift: float, period: float):
    """Rotate a tiling of ``[0, period)`` by ``shift`` and re-tile it."""
    shift = shift % period
    left = edges[:-1] + shift
    right = edges[1:] + shift
    ls, rs, ps = [], [], []
    for l, r, p in zip(left, right, dens):
        if r <= period:
            ls.append(l); rs.append(r); ps.append(p)
        elif l >= period:
            ls.append(l - period); rs.append(r - period); ps.append(p)
        else:
            ls.append(l); rs.append(period); ps.append(p)
            ls.append(0.0); rs.append(r - period); ps.append(p)
    order = np.argsort(ls, kind="stable")
    ls = np.clip(np.asarray(ls)[order], 0.0, period)
    rs = np.clip(np.asarray(rs)[order], 0.0, period)
    new_edges = np.concatenate([[0.0], rs])
    new_edges[-1] = period
    return new_edges, np.asarray(ps, dtype=float)[order]


@dataclass(frozen=True, eq=False)
class PiecewiseDensity:
    """Normalised piecewise-constant density tiling ``domain``.

    ``edges`` has one more entry than ``densities``; piece ``i`` is
    ``[edges[i], edges[i+1])``. When ``epsilon`` is given the within-pdf
    density ratio is checked against ``exp(epsilon)``.
    """

    edges: np.ndarray
    densities: np.ndarray
    domain: Interval
    epsilon: float | None = None
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        edges = np.array(self.edges, dtype=float)
        dens = np.array(self.densities, dtype=float)
        if edges.ndim != 1 or dens.ndim != 1 or len(edges) != len(dens) + 1 or len(dens) == 0:
            raise ValueError("need len(edges) == len(densities) + 1 >= 2")
        if np.any(dens < 0) or not np.all(np.isfinite(dens)):
            raise ValueError("densities must be finite and non-negative")
        scale = self.domain.length
        tol = 1e-9 * max(1.0, scale)
        if abs(edges[0] - self.domain.lo) > tol or abs(edges[-1] - self.domain.hi) > tol:
            raise ValueError(
                f"pieces [{edges[0]}, {edges[-1]}) do not tile domain {self.domain}")
        if np.any(np.diff(edges) < -tol):
            raise ValueError("pieces are not ordered left to right")
        edges[0], edges[-1] = self.domain.lo, self.domain.hi
        edges = np.maximum.accumulate(edges)

        keep = np.diff(edges) > _ZERO_WIDTH * scale
        if not np.all(keep):
            dens = dens[keep]
            edges = np.concatenate([[edges[0]], edges[1:][keep]])
            edges[-1] = self.domain.hi
            if len(dens) == 0:
                raise ValueError("all pieces have zero width")

        masses = dens * np.diff(edges)
        total = masses.sum()
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"density integrates to {total!r}, not 1")
        cum = np.concatenate([[0.0], np.cumsum(masses)])
        cum /= cum[-1]

        edges.setflags(write=False)
        dens.setflags(write=False)
        cum.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "densities", dens)
        object.__setattr__(self, "_cum", cum)

        if self.epsilon is not None:
            if self.epsilon < 0:
                raise ValueError("epsilon must be non-negative")
            if self.ratio() > math.exp(self.epsilon) * (1 + RATIO_TOL):
                raise ValueError(
                    f"density ratio {self.ratio():.6g} exceeds exp({self.epsilon})")

    @classmethod
    def from_pieces(cls, pieces: Iterable[Piece | tuple], domain: Interval,
                    epsilon: float | None = None) -> "PiecewiseDensity":
        ps = [p if isinstance(p, Piece) else Piece(*p) for p in pieces]
        if not ps:
            raise ValueError("no pieces")
        for a, b in zip(ps, ps[1:]):
            if abs(a.right - b.left) > 1e-9 * max(1.0, domain.length):
                raise ValueError(f"pieces are not contiguous at {a.right} / {b.left}")
        edges = [ps[0].left] + [p.right for p in ps]
        return cls(np.array(edges), np.array([p.density for p in ps]), domain, epsilon)

    @classmethod
    def uniform(cls, domain: Interval) -> "PiecewiseDensity":
        return cls(np.array([domain.lo, domain.hi]), np.array([1.0 / domain.length]), domain)

    @property
    def pieces(self) -> tuple[Piece, ...]:
        return tuple(Piece(float(p), float(l), float(r))
                     for p, l, r in zip(self.densities, self.edges[:-1], self.edges[1:]))

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def masses(self) -> np.ndarray:
        return np.diff(self._cum)

    def __len__(self):
        return len(self.densities)

    def __repr__(self):
        body = ", ".join(f"({p:.6g}, {l:.6g}, {r:.6g})" for p, l, r in
                         zip(self.densities, self.edges[:-1], self.edges[1:]))
        return f"PiecewiseDensity([{body}], domain={self.domain})"

    def ratio(self) -> float:
        """Largest over smallest positive density."""
        pos = self.densities[self.densities > 0]
        return float(pos.max() / pos.min())

    def with_epsilon(self, epsilon: float) -> "PiecewiseDensity":
        return PiecewiseDensity(self.edges, self.densities, self.domain, epsilon)

    def _index(self, y: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.edges, y, side="right") - 1
        return np.clip(idx, 0, len(self.densities) - 1)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        out = self.densities[self._index(y)]
        inside = (y >= self.domain.lo) & (y <= self.domain.hi)
        return np.where(inside, out, 0.0)

    def cdf(self, y):
        y = np.clip(np.asarray(y, dtype=float), self.domain.lo, self.domain.hi)
        idx = self._index(y)
        return np.minimum(self._cum[idx] + self.densities[idx] * (y - self.edges[idx]), 1.0)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        idx = np.searchsorted(self._cum, u, side="right") - 1
        idx = np.clip(idx, 0, len(self.densities) - 1)
        dens = self.densities[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            y = self.edges[idx] + (u - self._cum[idx]) / dens
        y = np.where(dens > 0, y, self.edges[idx])
        return np.clip(y, self.edges[idx], self.edges[idx + 1])

    def sample(self, rng: np.random.Generator, size=None):
        return self.ppf(rng.random(size))

    def mean(self) -> float:
        """First moment on the real line (not a circular mean)."""
        e = self.edges
        return float(np.sum(self.densities * (e[1:] ** 2 - e[:-1] ** 2) / 2.0))


@dataclass(frozen=True, eq=False)
class TruncatedDensity:
    """A density clamped to ``domain``: point masses at both ends plus an interior.

    ``interior`` is the conditional (normalised) density on ``domain``; it is
    ``None`` when the atoms carry all of the mass.
    """

    domain: Interval
    interior: PiecewiseDensity | None
    lo_mass: float
    hi_mass: float

    def __post_init__(self):
        if self.lo_mass < 0 or self.hi_mass < 0:
            raise ValueError("atom masses must be non-negative")
        w = 1.0 - self.lo_mass - self.hi_mass
        if w < -NORMALIZATION_TOL:
            raise ValueError("atoms carry more than unit mass")
        if self.interior is None and w > NORMALIZATION_TOL:
            raise ValueError("interior mass without an interior density")

    @property
    def interior_mass(self) -> float:
        return max(0.0, 1.0 - self.lo_mass - self.hi_mass)

    def pdf(self, y):
        """Density of the continuous part (atoms excluded)."""
        if self.interior is None:
            return np.zeros_like(np.asarray(y, dtype=float))
        return self.interior_mass * self.interior.pdf(y)

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        inner = 0.0 if self.interior is None else self.interior_mass * self.interior.cdf(y)
        out = self.lo_mass + inner + np.where(y >= self.domain.hi, self.hi_mass, 0.0)
        return np.where(y < self.domain.lo, 0.0, np.minimum(out, 1.0))

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        w = self.interior_mass
        y = np.full(u.shape, self.domain.lo)
        y = np.where(u >= self.lo_mass + w, self.domain.hi, y)
        mid = (u >= self.lo_mass) & (u < self.lo_mass + w)
        if self.interior is not None and w > 0:
            v = np.clip((u - self.lo_mass) / w, 0.0, 1.0)
            y = np.where(mid, self.interior.ppf(v), y)
        return y

    def sample(self, rng: np.random.Generator, size=None):
        return self.ppf(rng.random(size))

    def mean(self) -> float:
        inner = 0.0 if self.interior is None else self.interior_mass * self.interior.mean()
        return self.lo_mass * self.domain.lo + self.hi_mass * self.domain.hi + inner


Density = Union[PiecewiseDensity, TruncatedDensity]


def metric_eval(metric: ErrorMetric, domain: Interval, y, x):
    """Loss between output ``y`` and input ``x`` (vectorised over ``y``)."""
    if not domain.contains(y) or not domain.contains(x):
        raise DomainError(f"arguments outside {domain}")
    d = np.abs(np.asarray(y, dtype=float) - float(x))
    if domain.is_circular:
        d = np.mod(d, TWO_PI)
        d = np.minimum(d, TWO_PI - d)
    out = d ** metric.power
    return float(out) if np.ndim(out) == 0 else out


def sample(pdf: Density, u):
    """Inverse-CDF transform of the uniform variate(s) ``u``."""
    out = pdf.ppf(u)
    return float(out) if np.ndim(out) == 0 else out


def _classical_error(edges, dens, power, x) -> float:
    g = _antiderivative(edges - x, power)
    return float(np.sum(dens * np.diff(g)))


def expected_error(pdf: Density, metric: ErrorMetric, x: float) -> float:
    """Exact ``E|M(x) - x|^p`` by piecewise polynomial integration."""
    if isinstance(pdf, TruncatedDensity):
        dom = pdf.domain
        if not dom.contains(x):
            raise DomainError(f"x={x} outside {dom}")
        k = metric.power
        total = pdf.lo_mass * abs(dom.lo - x) ** k + pdf.hi_mass * abs(dom.hi - x) ** k
        if pdf.interior is not None and pdf.interior_mass > 0:
            total += pdf.interior_mass * expected_error(pdf.interior, metric, x)
        return total
    if not pdf.domain.contains(x):
        raise DomainError(f"x={x} outside {pdf.domain}")
    if pdf.domain.is_circular:
        # rotate so x sits at pi; the shorter arc is then |y - pi|
        edges, dens = _rotate(pdf.edges, pdf.densities, math.pi - x, TWO_PI)
        return _classical_error(edges, dens, metric.power, math.pi)
    return _classical_error(pdf.edges, pdf.densities, metric.power, x)


def rotate(pdf: PiecewiseDensity, shift: float) -> PiecewiseDensity:
    """Rotate a circular density by ``shift`` radians."""
    if not pdf.domain.is_circular:
        raise ValueError("rotation needs a circular domain")
    edges, dens = _rotate(pdf.edges, pdf.densities, shift, TWO_PI)
    return PiecewiseDensity(edges, dens, pdf.domain, pdf.epsilon)


def apply_transform(pdf: PiecewiseDensity, t: Transform) -> PiecewiseDensity:
    """Scale/shift a classical density; density ratios (hence epsilon) are kept."""
    if pdf.domain.is_circular:
        raise ValueError("affine transforms are defined on classical domains only")
    return PiecewiseDensity(t(pdf.edges), pdf.densities / t.scale,
                            t.apply_interval(pdf.domain), pdf.epsilon)


def truncate(pdf: PiecewiseDensity, target: Interval) -> TruncatedDensity:
    """Clamp outputs to ``target``: outside mass collapses onto the endpoints."""
    if pdf.domain.is_circular or target.is_circular:
        raise ValueError("truncation is defined on classical domains only")
    if not pdf.domain.contains_interval(target):
        raise DomainError(f"{target} is not inside {pdf.domain}")
    lo_mass = float(pdf.cdf(target.lo))
    hi_mass = float(1.0 - pdf.cdf(target.hi))
    inner = 1.0 - lo_mass - hi_mass
    if inner <= NORMALIZATION_TOL:
        return TruncatedDensity(target, None, lo_mass, 1.0 - lo_mass)
    lo_i = np.searchsorted(pdf.edges, target.lo, side="right") - 1
    hi_i = np.searchsorted(pdf.edges, target.hi, side="left")
    edges = np.array(pdf.edges[lo_i:hi_i + 1], dtype=float)
    edges[0], edges[-1] = target.lo, target.hi
    dens = np.array(pdf.densities[lo_i:hi_i], dtype=float)
    dens /= np.sum(dens * np.diff(edges))
    return TruncatedDensity(target, PiecewiseDensity(edges, dens, target), lo_mass, hi_mass)


def density_ratio(a: Density, b: Density) -> float:
    """Exact sup over y of ``pdf_a(y) / pdf_b(y)`` for piecewise densities.

    Both densities must share a domain. Points where ``b`` vanishes but ``a``
    does not give ``inf``. For truncated densities atoms are compared with
    atoms and the continuous parts with each other, never across.
    """
    if isinstance(a, TruncatedDensity) != isinstance(b, TruncatedDensity):
        raise ValueError("cannot compare a truncated density with a plain one")
    if isinstance(a, TruncatedDensity):
        ratios = [_mass_ratio(a.lo_mass, b.lo_mass), _mass_ratio(a.hi_mass, b.hi_mass)]
        ia = a.interior_mass if a.interior is not None else 0.0
        ib = b.interior_mass if b.interior is not None else 0.0
        if ia > 0 and ib > 0:
            scale = ia / ib
            ratios.append(scale * density_ratio(a.interior, b.interior))
        else:
            ratios.append(_mass_ratio(ia, ib))
        return max(ratios)
    edges = np.union1d(a.edges, b.edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    pa, pb = a.pdf(mids), b.pdf(mids)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(pb > 0, pa / pb, np.where(pa > 0, np.inf, 1.0))
    return float(r.max())


def _mass_ratio(ma: float, mb: float) -> float:
    if mb > 0:
        return ma / mb
    return math.inf if ma > 0 else 1.0


def merge_pieces(pdf: PiecewiseDensity, tol: float = 1e-7) -> PiecewiseDensity:
    """Merge neighbouring pieces whose densities agree within ``tol``.

    Merged pieces take their mass-weighted mean density, so total mass is
    preserved exactly. Circular densities keep the split at ``0 / 2*pi``.
    """
    edges, dens = pdf.edges, pdf.densities
    new_edges = [edges[0]]
    new_dens: list[float] = []
    mass = 0.0
    start = edges[0]
    for i, p in enumerate(dens):
        if new_dens and abs(p - new_dens[-1]) <= tol * max(1.0, abs(p)):
            mass += p * (edges[i + 1] - edges[i])
            new_dens[-1] = mass / (edges[i + 1] - start)
            new_edges[-1] = edges[i + 1]
        else:
            start = edges[i]
            mass = p * (edges[i + 1] - edges[i])
            new_dens.append(float(p))
            new_edges.append(edges[i + 1])
    return PiecewiseDensity(np.array(new_edges), np.array(new_dens), pdf.domain, pdf.epsilon)


def check_ldp(pdfs: Sequence[Density], epsilon: float) -> float:
    """Largest pairwise density ratio across ``pdfs``; raises if above ``exp(epsilon)``."""
    worst = max(density_ratio(a, b) for a in pdfs for b in pdfs)
    if worst > math.exp(epsilon) * (1 + RATIO_TOL):
        raise ValueError(f"LDP violated: ratio {worst:.6g} > exp({epsilon})")
    return worst
