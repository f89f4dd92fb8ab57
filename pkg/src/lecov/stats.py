"""Moment statistics over activation vectors and the k-multisection binning rule."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

# Below this central second moment a vector is treated as constant: skewness
# and kurtosis are reported as 0 with the degenerate flag set.
DEGENERATE_M2 = 1e-12


class Measure(Enum):
    MEAN = "mean"
    VARIANCE = "var"
    KURTOSIS = "kurt"
    SKEWNESS = "skew"


MEASURES = (Measure.MEAN, Measure.VARIANCE, Measure.KURTOSIS, Measure.SKEWNESS)


@dataclass(frozen=True)
class SectionConfig:
    """k equal sections of [lb, ub]."""

    lb: float
    ub: float
    k: int

    def __post_init__(self):
        if not self.lb < self.ub:
            raise ValueError(f"section config requires lb < ub, got [{self.lb}, {self.ub}]")
        if self.k < 1:
            raise ValueError(f"section count must be >= 1, got {self.k}")


def central_moments(values: Sequence[float]) -> tuple[float, float, float, float]:
    """Population moments (mean, m2, m3, m4) of a non-empty sequence."""
    n = len(values)
    if n == 0:
        raise ValueError("cannot compute moments of an empty sequence")
    mean = math.fsum(values) / n
    m2 = math.fsum((v - mean) ** 2 for v in values) / n
    m3 = math.fsum((v - mean) ** 3 for v in values) / n
    m4 = math.fsum((v - mean) ** 4 for v in values) / n
    return mean, m2, m3, m4


def kappa(values: Sequence[float], measure: Measure) -> float:
    """Scalar summary of a vector: mean, population variance, Pearson
    (non-excess) kurtosis m4/m2^2, or skewness m3/m2^1.5.

    Near-constant vectors (m2 < DEGENERATE_M2) yield 0 for skewness and
    kurtosis; use kappa_flagged when the degeneracy event matters.
    """
    value, _ = kappa_flagged(values, measure)
    return value


def kappa_flagged(values: Sequence[float], measure: Measure) -> tuple[float, bool]:
    """Like kappa but also reports whether the degenerate-m2 fallback fired."""
    mean, m2, m3, m4 = central_moments(values)
    if measure is Measure.MEAN:
        return mean, False
    if measure is Measure.VARIANCE:
        return m2, False
    if m2 < DEGENERATE_M2:
        return 0.0, True
    if measure is Measure.SKEWNESS:
        return m3 / m2**1.5, False
    return m4 / m2**2, False


def section_index(value: float, cfg: SectionConfig) -> Optional[int]:
    """Index of the section containing value, or None when out of [lb, ub].

    value == ub is clamped into the last section so the full range is
    coverable. Callers count None results in their own diagnostics.
    """
    if value < cfg.lb or value > cfg.ub:
        return None
    width = (cfg.ub - cfg.lb) / cfg.k
    idx = int((value - cfg.lb) / width)
    return min(idx, cfg.k - 1)
