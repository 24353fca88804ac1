"""Distribution and mean estimation experiments on perturbed data."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, TextIO, Union

import numpy as np

from .core import TWO_PI, Interval
from .mechanisms import MechanismSpec, get_mechanism

DEFAULT_BINS = 50
REPORT_HEADER = ("mechanism", "epsilon", "task", "error_mean", "error_std", "trials", "seed")

Seed = Union[int, np.random.Generator, None]


class ConfigError(ValueError):
    """Malformed experiment configuration."""


class DatasetError(ValueError):
    """A dataset could not be loaded."""


def _rng(seed: Seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class Dataset:
    values: np.ndarray
    domain: Interval
    name: str = "data"

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("dataset contains non-finite values")
        if v.size and not self.domain.contains(v):
            raise ValueError(f"dataset values outside {self.domain}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


def _below(hi: float) -> float:
    return float(np.nextafter(hi, -np.inf))


def synthetic_dataset(kind: str, n: int, domain: Interval = Interval.unit(),
                      seed: Seed = 0) -> Dataset:
    """Seeded synthetic data.

    Args:
        kind: ``uniform``, ``gaussian`` (N(mid, (L/6)^2) clipped to the
            domain) or ``vonmises`` (two-component von Mises mixture, mapped
            linearly onto classical domains).
        n: Number of values.
        domain: Target domain.
        seed: Seed or generator.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = _rng(seed)
    lo, hi, L = domain.lo, domain.hi, domain.length
    if kind == "uniform":
        v = rng.uniform(lo, hi, n)
    elif kind == "gaussian":
        v = rng.normal(lo + L / 2, L / 6, n)
    elif kind == "vonmises":
        comp = rng.random(n) < 0.6
        ang = np.where(comp, rng.vonmises(1.0, 4.0, n), rng.vonmises(2.5, 2.0, n))
        v = lo + np.mod(ang, TWO_PI) / TWO_PI * L
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    return Dataset(np.clip(v, lo, _below(hi)), domain, f"synthetic:{kind}")


class Normalize(enum.Enum):
    TO_UNIT = "unit"
    TO_CIRCLE = "circle"
    NONE = "none"


def load_csv_dataset(path, column: str, normalize: Normalize = Normalize.TO_UNIT,
                     domain: Optional[Interval] = None) -> Dataset:
    """Read one numeric column from a CSV file with a header row.

    ``TO_UNIT`` min-max scales into ``[0, 1)`` (the maximum is placed just
    below 1); ``TO_CIRCLE`` wraps radians into ``[0, 2*pi)``; ``NONE``
    keeps raw values, which must then lie in ``domain``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DatasetError(f"{path} is empty")
        if column not in reader.fieldnames:
            raise DatasetError(f"column {column!r} not found in {path}")
        vals = []
        for i, row in enumerate(reader, start=2):
            cell = (row[column] or "").strip()
            try:
                vals.append(float(cell))
            except ValueError:
                raise DatasetError(f"non-numeric value {cell!r} in column {column!r}, line {i}"
                                   ) from None
    if not vals:
        raise DatasetError(f"{path} has no data rows")
    v = np.array(vals)
    if not np.all(np.isfinite(v)):
        raise DatasetError(f"non-finite value in column {column!r}")
    name = f"{path.name}:{column}"
    if normalize is Normalize.TO_UNIT:
        lo, hi = v.min(), v.max()
        u = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
        return Dataset(np.minimum(u, _below(1.0)), Interval.unit(), name)
    if normalize is Normalize.TO_CIRCLE:
        w = np.mod(v, TWO_PI)
        return Dataset(np.where(w >= TWO_PI, 0.0, w), Interval.circle(), name)
    if domain is None:
        raise DatasetError("normalize=none needs an explicit domain")
    try:
        return Dataset(v, domain, name)
    except ValueError as exc:
        raise DatasetError(str(exc)) from None


# ---------------------------------------------------------------------------
# estimators


def histogram(values: np.ndarray, domain: Interval, bins: int) -> np.ndarray:
    """Normalised histogram over ``domain``; outside values join the edge bins."""
    if bins < 1:
        raise ValueError("bins must be at least 1")
    idx = np.floor((np.asarray(values) - domain.lo) / domain.length * bins).astype(int)
    counts = np.bincount(np.clip(idx, 0, bins - 1), minlength=bins)
    return counts / max(counts.sum(), 1)


@dataclass(frozen=True, eq=False)
class DistributionEstimate:
    estimated: np.ndarray
    true: np.ndarray
    l1: float


def estimate_distribution(data: Dataset, spec: MechanismSpec, eps: float,
                          bins: int = DEFAULT_BINS, seed: Seed = 0) -> DistributionEstimate:
    """Histogram of perturbed values against the histogram of raw values."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    y = spec.perturb(eps, data.values, _rng(seed))
    est = histogram(y, data.domain, bins)
    true = histogram(data.values, data.domain, bins)
    return DistributionEstimate(est, true, float(np.abs(est - true).sum()))


def circular_mean(values) -> tuple[float, bool]:
    """``atan2`` mean in ``[0, 2*pi)`` and whether it is degenerate."""
    v = np.asarray(values, dtype=float)
    s, c = np.mean(np.sin(v)), np.mean(np.cos(v))
    if math.hypot(s, c) < 1e-12:
        return math.nan, True
    return float(np.mod(math.atan2(s, c), TWO_PI)), False


def arc_distance(a: float, b: float) -> float:
    d = abs(a - b) % TWO_PI
    return min(d, TWO_PI - d)


@dataclass(frozen=True)
class MeanEstimate:
    mu_hat: float
    mu: float
    abs_err: float
    degenerate: bool = False


def estimate_mean(data: Dataset, spec: MechanismSpec, eps: float, seed: Seed = 0) -> MeanEstimate:
    """Mean of perturbed values against the raw mean (circular on the circle)."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    y = spec.perturb(eps, data.values, _rng(seed))
    if data.domain.is_circular:
        mu, d1 = circular_mean(data.values)
        mu_hat, d2 = circular_mean(y)
        if d1 or d2:
            return MeanEstimate(mu_hat, mu, math.nan, True)
        return MeanEstimate(mu_hat, mu, arc_distance(mu_hat, mu))
    mu, mu_hat = float(np.mean(data.values)), float(np.mean(y))
    return MeanEstimate(mu_hat, mu, abs(mu_hat - mu))


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class EstimationReport:
    mechanism: str
    epsilon: float
    task: str
    error_mean: float
    error_std: float
    trials: int
    seed: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.error_mean >= 0:
            raise ValueError("error_mean must be non-negative")

    def row(self):
        return (self.mechanism, repr(float(self.epsilon)), self.task, repr(self.error_mean),
                repr(self.error_std), str(self.trials), str(self.seed))


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep definition; see :func:`parse_config` for the file format."""

    mechanisms: tuple[str, ...]
    epsilons: tuple[float, ...]
    tasks: tuple[str, ...] = ("distribution", "mean")
    trials: int = 20
    bins: int = DEFAULT_BINS
    dataset: str = "synthetic:uniform"
    column: str = "value"
    normalize: str = "unit"
    domain: str = "unit"
    n: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not self.mechanisms:
            raise ConfigError("no mechanisms given")
        if not self.epsilons or any(not e > 0 for e in self.epsilons):
            raise ConfigError("epsilons must be positive")
        bad = set(self.tasks) - {"distribution", "mean"}
        if bad or not self.tasks:
            raise ConfigError(f"unknown tasks {sorted(bad)}")
        if self.trials < 1 or self.bins < 1 or self.n < 1:
            raise ConfigError("trials, bins and n must be positive")
        if self.domain not in ("unit", "circle"):
            raise ConfigError(f"domain must be unit or circle, got {self.domain!r}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def interval(self) -> Interval:
        return Interval.circle() if self.domain == "circle" else Interval.unit()

    def load(self) -> Dataset:
        if self.dataset.startswith("synthetic:"):
            kind = self.dataset.split(":", 1)[1]
            try:
                return synthetic_dataset(kind, self.n, self.interval, seed=self.seed)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        try:
            norm = Normalize(self.normalize)
        except ValueError:
            raise ConfigError(f"unknown normalize {self.normalize!r}") from None
        return load_csv_dataset(self.dataset, self.column, norm, self.interval)


_LIST_KEYS = {"mechanisms", "epsilons", "tasks"}
_INT_KEYS = {"trials", "bins", "n", "seed"}


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment; lists are comma separated."""
    kw: dict = {}
    valid = set(ExperimentConfig.__dataclass_fields__)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in valid:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            if key == "epsilons":
                kw[key] = tuple(float(v) for v in val.split(",") if v.strip())
            elif key in _LIST_KEYS:
                kw[key] = tuple(v.strip() for v in val.split(",") if v.strip())
            elif key in _INT_KEYS:
                kw[key] = int(val)
            else:
                kw[key] = val
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from None
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def trial_rng(master: int, trial: int) -> np.random.Generator:
    """Per-trial generator; independent of execution order."""
    return np.random.default_rng(np.random.SeedSequence([master, trial]))


def run_experiment(config: ExperimentConfig, data: Optional[Dataset] = None
                   ) -> list[EstimationReport]:
    """Run every mechanism x epsilon x task combination.

    Trial ``t`` uses the same generator seed for all combinations, so
    comparisons across mechanisms and epsilons share random numbers.
    """
    data = config.load() if data is None else data
    try:
        specs = [get_mechanism(m, data.domain) for m in config.mechanisms]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    reports = []
    for name, spec in zip(config.mechanisms, specs):
        for eps in config.epsilons:
            for task in config.tasks:
                errs = np.empty(config.trials)
                for t in range(config.trials):
                    rng = trial_rng(config.seed, t)
                    if task == "distribution":
                        errs[t] = estimate_distribution(data, spec, eps, config.bins, rng).l1
                    else:
                        errs[t] = estimate_mean(data, spec, eps, rng).abs_err
                label = f"distribution(k={config.bins})" if task == "distribution" else "mean"
                std = float(errs.std(ddof=1)) if config.trials > 1 else 0.0
                reports.append(EstimationReport(name, float(eps), label, float(errs.mean()), std,
                                                config.trials, config.seed))
    return reports


def write_reports_csv(reports, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for r in reports:
        w.writerow(r.row())


def read_reports_csv(fh: TextIO) -> list[EstimationReport]:
    out = []
    for r in csv.DictReader(fh):
        out.append(EstimationReport(r["mechanism"], float(r["epsilon"]), r["task"],
                                    float(r["error_mean"]), float(r["error_std"]),
                                    int(r["trials"]), int(r["seed"])))
    return out
