"""Mantel-Haenszel rate ratio estimation under cohort sampling designs."""

from ._mhcohort import (
    EstimateResult,
    IoError,
    NumericalError,
    SchemaError,
    UsageError,
    are_curve,
    estimate_csv,
    hypergeom_moment,
    run,
    sigma2,
)

__all__ = [
    "EstimateResult",
    "IoError",
    "NumericalError",
    "SchemaError",
    "UsageError",
    "are_curve",
    "estimate_csv",
    "hypergeom_moment",
    "run",
    "sigma2",
]
