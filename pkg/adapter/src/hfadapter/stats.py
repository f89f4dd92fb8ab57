"""Scalar summaries of raw activation vectors.

Deliberately self-contained: the adapter recomputes the four moment
statistics from scratch so that parity with the consumer's engine can be
checked over plain-text fixtures rather than shared code.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

_DEGENERATE_M2 = 1e-12


def head_summary(values: Sequence[float]) -> dict[str, float]:
    """Population mean/variance plus Pearson skewness and kurtosis.

    Near-constant vectors (second moment below 1e-12) report 0 for both
    shape statistics instead of dividing by ~0.
    """
    n = len(values)
    if n == 0:
        raise ValueError("cannot summarize an empty vector")
    mean = math.fsum(values) / n
    m2 = math.fsum((v - mean) ** 2 for v in values) / n
    m3 = math.fsum((v - mean) ** 3 for v in values) / n
    m4 = math.fsum((v - mean) ** 4 for v in values) / n
    if m2 < _DEGENERATE_M2:
        skew, kurt = 0.0, 0.0
    else:
        skew = m3 / m2**1.5
        kurt = m4 / m2**2
    return {"mean": mean, "var": m2, "skew": skew, "kurt": kurt}


def read_vector_fixture(path: str | Path) -> list[list[float]]:
    """Plain-text vector exchange format: one vector per line,
    whitespace-separated decimal reals; blank lines and # comments skipped."""
    vectors = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        vectors.append([float(tok) for tok in line.split()])
    return vectors


def write_vector_fixture(path: str | Path, vectors: Sequence[Sequence[float]]) -> None:
    lines = [" ".join(f"{v:.17g}" for v in vec) for vec in vectors]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
