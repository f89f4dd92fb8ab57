"""Per-head statistic bounds and global entropy/likelihood bounds from a
profiling corpus, plus their on-disk format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .stats import MEASURES, Measure
from .trace import GenerationTrace, Topology

BOUNDS_VERSION = "lecov-bounds/1"

HeadKey = tuple[int, int, Measure]


class CalibrationError(ValueError):
    pass


def _measure_of(stat_name: str):
    return {m.value: m for m in MEASURES}[stat_name]


@dataclass
class CalibrationBounds:
    topology: Topology
    head_bounds: dict[HeadKey, tuple[float, float]]
    entropy_bounds: tuple[float, float]
    likelihood_bounds: tuple[float, float]
    # observation counts per serialized key; zero-observation keys are the
    # flagged degenerate ones
    profile_stats: dict[str, int] = field(default_factory=dict)

    def unobserved_keys(self) -> list[str]:
        return sorted(k for k, n in self.profile_stats.items() if n == 0)


def _key_str(layer: int, head: int, measure: Measure) -> str:
    return f"L{layer}.H{head}.{measure.value}"


def profile_bounds(
    traces: Iterable[GenerationTrace],
    percentiles: Optional[tuple[float, float]] = None,
) -> CalibrationBounds:
    """Fold min/max per (layer, head, measure) over every step of every trace.

    Entropy ub is raised to at least ln(vocab_size); likelihood bounds are the
    analytic [0, 1]. `percentiles=(lo, hi)` (fractions in [0,1]) switches from
    min/max to empirical percentiles for outlier robustness.
    """
    topology: Optional[Topology] = None
    observed: dict[HeadKey, list[float]] = {}
    entropies: list[float] = []
    count = 0
    for trace in traces:
        count += 1
        if topology is None:
            topology = trace.topology
        elif trace.topology != topology:
            raise CalibrationError(
                f"mixed topologies in profiling corpus: {topology} vs {trace.topology}"
            )
        for step in trace.steps:
            entropies.append(step.entropy)
            for h in step.heads:
                values = (
                    (Measure.MEAN, h.mean),
                    (Measure.VARIANCE, h.variance),
                    (Measure.SKEWNESS, h.skewness),
                    (Measure.KURTOSIS, h.kurtosis),
                )
                for measure, value in values:
                    observed.setdefault((h.layer, h.head, measure), []).append(value)
    if count == 0 or topology is None:
        raise CalibrationError("profiling corpus is empty")

    def span(values: list[float]) -> tuple[float, float]:
        if percentiles is None:
            return min(values), max(values)
        values = sorted(values)
        lo = values[int(percentiles[0] * (len(values) - 1))]
        hi = values[int(math.ceil(percentiles[1] * (len(values) - 1)))]
        return lo, hi

    head_bounds: dict[HeadKey, tuple[float, float]] = {}
    profile_stats: dict[str, int] = {}
    for layer, head in topology.head_keys():
        for measure in MEASURES:
            key = (layer, head, measure)
            values = observed.get(key, [])
            profile_stats[_key_str(layer, head, measure)] = len(values)
            head_bounds[key] = span(values) if values else (0.0, 0.0)

    profile_stats["entropy"] = len(entropies)
    profile_stats["likelihood"] = len(entropies)
    if entropies:
        ent_lo, ent_hi = span(entropies)
    else:
        ent_lo, ent_hi = 0.0, 0.0
    ent_hi = max(ent_hi, math.log(topology.vocab_size))
    return CalibrationBounds(
        topology=topology,
        head_bounds=head_bounds,
        entropy_bounds=(ent_lo, ent_hi),
        likelihood_bounds=(0.0, 1.0),
        profile_stats=profile_stats,
    )


def merge_bounds(a: CalibrationBounds, b: CalibrationBounds) -> CalibrationBounds:
    """Elementwise (min, max) combine of two partial profiles."""
    if a.topology != b.topology:
        raise CalibrationError("cannot merge bounds with different topologies")

    def combine(x: tuple[float, float], y: tuple[float, float], nx: int, ny: int):
        if nx == 0:
            return y
        if ny == 0:
            return x
        return min(x[0], y[0]), max(x[1], y[1])

    head_bounds = {}
    stats = {}
    for layer, head in a.topology.head_keys():
        for measure in MEASURES:
            key = (layer, head, measure)
            ks = _key_str(layer, head, measure)
            nx, ny = a.profile_stats.get(ks, 0), b.profile_stats.get(ks, 0)
            head_bounds[key] = combine(a.head_bounds[key], b.head_bounds[key], nx, ny)
            stats[ks] = nx + ny
    ne_a, ne_b = a.profile_stats.get("entropy", 0), b.profile_stats.get("entropy", 0)
    stats["entropy"] = ne_a + ne_b
    stats["likelihood"] = stats["entropy"]
    return CalibrationBounds(
        topology=a.topology,
        head_bounds=head_bounds,
        entropy_bounds=combine(a.entropy_bounds, b.entropy_bounds, ne_a, ne_b),
        likelihood_bounds=(0.0, 1.0),
        profile_stats=stats,
    )


def save_bounds(bounds: CalibrationBounds) -> str:
    topo = bounds.topology
    record = {
        "version": BOUNDS_VERSION,
        "topology": {
            "layers": topo.layers,
            "heads_per_layer": topo.heads_per_layer,
            "neurons_per_layer": topo.neurons_per_layer,
            "vocab_size": topo.vocab_size,
        },
        "bounds": {},
        "profile_stats": {},
    }
    for layer, head in topo.head_keys():
        for measure in MEASURES:
            key = _key_str(layer, head, measure)
            lb, ub = bounds.head_bounds[(layer, head, measure)]
            record["bounds"][key] = [f"{lb:.17g}", f"{ub:.17g}"]
    record["bounds"]["entropy"] = [f"{v:.17g}" for v in bounds.entropy_bounds]
    record["bounds"]["likelihood"] = [f"{v:.17g}" for v in bounds.likelihood_bounds]
    for key in sorted(bounds.profile_stats):
        record["profile_stats"][key] = bounds.profile_stats[key]
    return json.dumps(record, indent=1)


def load_bounds(text: str) -> CalibrationBounds:
    try:
        record = json.loads(text)
    except json.JSONDecodeError as e:
        raise CalibrationError(f"bounds file is not valid JSON: {e}") from e
    if not isinstance(record, dict) or record.get("version") != BOUNDS_VERSION:
        raise CalibrationError(f"unsupported bounds version {record.get('version')!r}")
    try:
        topo = Topology(**record["topology"])
        raw = record["bounds"]
        head_bounds = {}
        for layer, head in topo.head_keys():
            for measure in MEASURES:
                lb, ub = raw[_key_str(layer, head, measure)]
                head_bounds[(layer, head, measure)] = (float(lb), float(ub))
        bounds = CalibrationBounds(
            topology=topo,
            head_bounds=head_bounds,
            entropy_bounds=tuple(float(v) for v in raw["entropy"]),
            likelihood_bounds=tuple(float(v) for v in raw["likelihood"]),
            profile_stats={str(k): int(n) for k, n in record["profile_stats"].items()},
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CalibrationError(f"bounds file missing or ill-typed field: {e}") from e
    for key, (lb, ub) in bounds.head_bounds.items():
        if lb > ub:
            raise CalibrationError(f"bounds for {key} have lb > ub")
    return bounds
