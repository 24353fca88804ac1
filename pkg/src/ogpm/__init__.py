"""Optimal piecewise mechanisms for local differential privacy on bounded domains."""
from .core import (
    L1,
    L2,
    DomainError,
    ErrorMetric,
    Interval,
    Piece,
    PiecewiseDensity,
    Topology,
    Transform,
    TruncatedDensity,
    apply_transform,
    expected_error,
    metric_eval,
    sample,
    truncate,
)
from .mechanisms import MechanismSpec, get_mechanism

__version__ = "0.1.0"
