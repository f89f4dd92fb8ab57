"""Independent brute-force oracles used by the test suite.

These deliberately re-derive everything from first principles (four-pass
moments, section scan instead of floor arithmetic, exhaustive enumeration of
covered sets) so they stay independent of the library code they check.
"""
from __future__ import annotations

from lecov.calibration import CalibrationBounds
from lecov.coverage import CriteriaConfig
from lecov.stats import Measure
from lecov.trace import GenerationTrace


def naive_moments(values):
    """Four explicit passes; no shared code with lecov.stats."""
    n = len(values)
    mean = sum(values) / n
    m2 = sum((v - mean) ** 2 for v in values) / n
    m3 = sum((v - mean) ** 3 for v in values) / n
    m4 = sum((v - mean) ** 4 for v in values) / n
    return mean, m2, m3, m4


def naive_kappa(values, measure: Measure) -> float:
    mean, m2, m3, m4 = naive_moments(values)
    if measure is Measure.MEAN:
        return mean
    if measure is Measure.VARIANCE:
        return m2
    if m2 < 1e-12:
        return 0.0
    if measure is Measure.SKEWNESS:
        return m3 / m2**1.5
    return m4 / m2**2


def scan_section(value: float, lb: float, ub: float, k: int):
    """Find the section by scanning interval bounds (half-open except the
    last), instead of the engine's floor arithmetic."""
    if lb == ub:
        return 0 if value == lb else None
    width = (ub - lb) / k
    for i in range(k):
        lo = lb + i * width
        hi = ub if i == k - 1 else lb + (i + 1) * width
        if (lo <= value < hi) or (i == k - 1 and lo <= value <= hi):
            return i
    return None


def brute_force_counts(
    traces: list[GenerationTrace],
    bounds: CalibrationBounds,
    config: CriteriaConfig,
) -> dict[str, int]:
    """Covered-set sizes for all nine criteria by exhaustive enumeration."""
    topo = bounds.topology
    k = config.k_sections

    stat_of = {
        Measure.MEAN: lambda h: h.mean,
        Measure.VARIANCE: lambda h: h.variance,
        Measure.KURTOSIS: lambda h: h.kurtosis,
        Measure.SKEWNESS: lambda h: h.skewness,
    }
    attention = {}
    for name, measure in (
        ("KMAC", Measure.MEAN),
        ("KVAC", Measure.VARIANCE),
        ("KKAC", Measure.KURTOSIS),
        ("KSAC", Measure.SKEWNESS),
    ):
        covered = set()
        for layer, head in topo.head_keys():
            lb, ub = bounds.head_bounds[(layer, head, measure)]
            for i in range(k):
                # section (layer, head, i) is covered iff some step of some
                # trace lands a statistic of this head in it
                hit = any(
                    scan_section(stat_of[measure](h), lb, ub, k) == i
                    for trace in traces
                    for step in trace.steps
                    for h in step.heads
                    if (h.layer, h.head) == (layer, head)
                )
                if hit:
                    covered.add((layer, head, i))
        attention[name] = len(covered)

    hyperactive = set()
    topk_hit = set()
    frequent = set()
    for gid in range(topo.num_neurons):
        layer, local = divmod(gid, topo.neurons_per_layer)
        for trace in traces:
            acts_per_step = [
                dict(la.activated)
                for step in trace.steps
                for la in step.layers
                if la.layer == layer
            ]
            if any(acts.get(local, 0.0) > config.h_threshold for acts in acts_per_step):
                hyperactive.add(gid)
            times = sum(
                1 for acts in acts_per_step if acts.get(local, 0.0) > config.h_threshold
            )
            if times > config.fhnc_r:
                frequent.add(gid)
            for step in trace.steps:
                for la in step.layers:
                    if la.layer == layer and local in la.topk[: config.itnc_k]:
                        topk_hit.add(gid)

    def multisection(values, span):
        return len(
            {
                i
                for i in range(k)
                for v in values
                if scan_section(v, span[0], span[1], k) == i
            }
        )

    entropies = [s.entropy for t in traces for s in t.steps]
    likelihoods = [s.avg_likelihood for t in traces for s in t.steps]
    return {
        **attention,
        "IHNC": len(hyperactive),
        "ITNC": len(topk_hit),
        "FHNC": len(frequent),
        "KMEC": multisection(entropies, bounds.entropy_bounds),
        "KMLC": multisection(likelihoods, bounds.likelihood_bounds),
    }
