"""The nine coverage criteria: incremental state, ingestion, values, merge.

Attention criteria bin per-head statistics into k sections of calibrated
[lb, ub] ranges; neuron criteria track hyperactive / top-k / frequently
hyperactive neuron sets; uncertainty criteria bin step entropy and average
likelihood into k global sections. One ingestion pass updates all nine.
"""
from __future__ import annotations

import copy as _copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .calibration import CalibrationBounds
from .stats import MEASURES, Measure, SectionConfig, section_index
from .trace import GenerationTrace


class CoverageError(ValueError):
    pass


class CriterionId(Enum):
    KMAC = "KMAC"
    KVAC = "KVAC"
    KKAC = "KKAC"
    KSAC = "KSAC"
    IHNC = "IHNC"
    ITNC = "ITNC"
    FHNC = "FHNC"
    KMEC = "KMEC"
    KMLC = "KMLC"


ALL_CRITERIA = tuple(CriterionId)

ATTENTION_MEASURE = {
    CriterionId.KMAC: Measure.MEAN,
    CriterionId.KVAC: Measure.VARIANCE,
    CriterionId.KKAC: Measure.KURTOSIS,
    CriterionId.KSAC: Measure.SKEWNESS,
}


@dataclass(frozen=True)
class CriteriaConfig:
    k_sections: int = 50
    h_threshold: float = 0.0
    itnc_k: int = 4
    fhnc_r: int = 2

    def __post_init__(self):
        if self.k_sections < 1:
            raise CoverageError(f"k_sections must be >= 1, got {self.k_sections}")
        if self.itnc_k < 1:
            raise CoverageError(f"itnc_k must be >= 1, got {self.itnc_k}")
        if self.fhnc_r < 0:
            raise CoverageError(f"fhnc_r must be >= 0, got {self.fhnc_r}")


def _bin(value: float, lb: float, ub: float, k: int) -> Optional[int]:
    # Degenerate calibrated interval: a single section covered by lb exactly.
    if lb == ub:
        return 0 if value == lb else None
    return section_index(value, SectionConfig(lb, ub, k))


@dataclass
class CoverageState:
    config: CriteriaConfig
    bounds: CalibrationBounds
    head_sections: dict[tuple[int, int, Measure], set[int]] = field(default_factory=dict)
    hyperactive: set[int] = field(default_factory=set)
    topk_hit: set[int] = field(default_factory=set)
    # per-neuron maximum within-one-trace hyperactivation count
    fhnc_counts: dict[int, int] = field(default_factory=dict)
    frequent: set[int] = field(default_factory=set)
    entropy_sections: set[int] = field(default_factory=set)
    likelihood_sections: set[int] = field(default_factory=set)
    out_of_range: int = 0
    ingested_trace_count: int = 0

    def copy(self) -> "CoverageState":
        return _copy.deepcopy(self)


def init_state(bounds: CalibrationBounds, config: CriteriaConfig) -> CoverageState:
    state = CoverageState(config=config, bounds=bounds)
    for layer, head in bounds.topology.head_keys():
        for measure in MEASURES:
            state.head_sections[(layer, head, measure)] = set()
    return state


def _check_trace(state: CoverageState, trace: GenerationTrace) -> None:
    if trace.topology != state.bounds.topology:
        raise CoverageError(
            f"trace topology {trace.topology} does not match bounds topology "
            f"{state.bounds.topology}"
        )
    if state.config.h_threshold < trace.recording_floor:
        raise CoverageError(
            f"h threshold {state.config.h_threshold} is below the trace's recording "
            f"floor {trace.recording_floor}; sub-floor activations were not recorded"
        )
    needed = min(state.config.itnc_k, trace.topology.neurons_per_layer)
    for step in trace.steps:
        for la in step.layers:
            if len(la.topk) < needed:
                raise CoverageError(
                    f"itnc_k={state.config.itnc_k} exceeds the trace's recorded "
                    f"top-K depth ({len(la.topk)}) at step {step.t} layer {la.layer}"
                )


def _trace_fhnc_counts(state: CoverageState, trace: GenerationTrace) -> dict[int, int]:
    counts: dict[int, int] = {}
    h = state.config.h_threshold
    for step in trace.steps:
        for la in step.layers:
            for nid, act in la.activated:
                if act > h:
                    gid = trace.topology.neuron_id(la.layer, nid)
                    counts[gid] = counts.get(gid, 0) + 1
    return counts


def ingest(state: CoverageState, trace: GenerationTrace) -> dict[CriterionId, int]:
    """Fold one trace into the state; returns newly-covered counts per
    criterion. Mutates and also returns deltas for logging."""
    _check_trace(state, trace)
    cfg = state.config
    before = {c: covered_count(state, c) for c in ALL_CRITERIA}

    k = cfg.k_sections
    for step in trace.steps:
        for h in step.heads:
            for measure, value in (
                (Measure.MEAN, h.mean),
                (Measure.VARIANCE, h.variance),
                (Measure.SKEWNESS, h.skewness),
                (Measure.KURTOSIS, h.kurtosis),
            ):
                lb, ub = state.bounds.head_bounds[(h.layer, h.head, measure)]
                idx = _bin(value, lb, ub, k)
                if idx is None:
                    state.out_of_range += 1
                else:
                    state.head_sections[(h.layer, h.head, measure)].add(idx)
        for la in step.layers:
            for nid, act in la.activated:
                if act > cfg.h_threshold:
                    state.hyperactive.add(trace.topology.neuron_id(la.layer, nid))
            for nid in la.topk[: cfg.itnc_k]:
                state.topk_hit.add(trace.topology.neuron_id(la.layer, nid))
        for value, lo_hi, sections in (
            (step.entropy, state.bounds.entropy_bounds, state.entropy_sections),
            (step.avg_likelihood, state.bounds.likelihood_bounds, state.likelihood_sections),
        ):
            idx = _bin(value, lo_hi[0], lo_hi[1], k)
            if idx is None:
                state.out_of_range += 1
            else:
                sections.add(idx)

    for gid, count in _trace_fhnc_counts(state, trace).items():
        if count > state.fhnc_counts.get(gid, 0):
            state.fhnc_counts[gid] = count
        if count > cfg.fhnc_r:
            state.frequent.add(gid)

    state.ingested_trace_count += 1
    return {c: covered_count(state, c) - before[c] for c in ALL_CRITERIA}


def covered_count(state: CoverageState, criterion: CriterionId) -> int:
    if criterion in ATTENTION_MEASURE:
        measure = ATTENTION_MEASURE[criterion]
        return sum(
            len(sections)
            for (_, _, m), sections in state.head_sections.items()
            if m is measure
        )
    if criterion is CriterionId.IHNC:
        return len(state.hyperactive)
    if criterion is CriterionId.ITNC:
        return len(state.topk_hit)
    if criterion is CriterionId.FHNC:
        return len(state.frequent)
    if criterion is CriterionId.KMEC:
        return len(state.entropy_sections)
    return len(state.likelihood_sections)


def total_count(state: CoverageState, criterion: CriterionId) -> int:
    topo = state.bounds.topology
    if criterion in ATTENTION_MEASURE:
        return state.config.k_sections * topo.num_heads
    if criterion in (CriterionId.IHNC, CriterionId.ITNC, CriterionId.FHNC):
        return topo.num_neurons
    return state.config.k_sections


def value(state: CoverageState, criterion: CriterionId) -> float:
    total = total_count(state, criterion)
    if total == 0:
        return 0.0
    return covered_count(state, criterion) / total


def new_coverage(state: CoverageState, trace: GenerationTrace, criterion: CriterionId) -> bool:
    """True iff ingesting the trace would strictly increase value(criterion).
    Pure query: the state is not modified."""
    _check_trace(state, trace)
    cfg = state.config
    topo = trace.topology
    if criterion in ATTENTION_MEASURE:
        measure = ATTENTION_MEASURE[criterion]
        for step in trace.steps:
            for h in step.heads:
                v = {
                    Measure.MEAN: h.mean,
                    Measure.VARIANCE: h.variance,
                    Measure.SKEWNESS: h.skewness,
                    Measure.KURTOSIS: h.kurtosis,
                }[measure]
                lb, ub = state.bounds.head_bounds[(h.layer, h.head, measure)]
                idx = _bin(v, lb, ub, cfg.k_sections)
                if idx is not None and idx not in state.head_sections[(h.layer, h.head, measure)]:
                    return True
        return False
    if criterion is CriterionId.IHNC:
        return any(
            act > cfg.h_threshold
            and topo.neuron_id(la.layer, nid) not in state.hyperactive
            for step in trace.steps
            for la in step.layers
            for nid, act in la.activated
        )
    if criterion is CriterionId.ITNC:
        return any(
            topo.neuron_id(la.layer, nid) not in state.topk_hit
            for step in trace.steps
            for la in step.layers
            for nid in la.topk[: cfg.itnc_k]
        )
    if criterion is CriterionId.FHNC:
        return any(
            count > cfg.fhnc_r and gid not in state.frequent
            for gid, count in _trace_fhnc_counts(state, trace).items()
        )
    if criterion is CriterionId.KMEC:
        lb, ub = state.bounds.entropy_bounds
        sections = state.entropy_sections
        values = (step.entropy for step in trace.steps)
    else:
        lb, ub = state.bounds.likelihood_bounds
        sections = state.likelihood_sections
        values = (step.avg_likelihood for step in trace.steps)
    for v in values:
        idx = _bin(v, lb, ub, cfg.k_sections)
        if idx is not None and idx not in sections:
            return True
    return False


def merge(a: CoverageState, b: CoverageState) -> CoverageState:
    """Union of two states built from identical config and bounds."""
    if a.config != b.config:
        raise CoverageError("cannot merge states with different configs")
    if (
        a.bounds.topology != b.bounds.topology
        or a.bounds.head_bounds != b.bounds.head_bounds
        or a.bounds.entropy_bounds != b.bounds.entropy_bounds
        or a.bounds.likelihood_bounds != b.bounds.likelihood_bounds
    ):
        raise CoverageError("cannot merge states with different bounds")
    out = init_state(a.bounds, a.config)
    for key in out.head_sections:
        out.head_sections[key] = a.head_sections[key] | b.head_sections[key]
    out.hyperactive = a.hyperactive | b.hyperactive
    out.topk_hit = a.topk_hit | b.topk_hit
    for gid in set(a.fhnc_counts) | set(b.fhnc_counts):
        out.fhnc_counts[gid] = max(a.fhnc_counts.get(gid, 0), b.fhnc_counts.get(gid, 0))
    out.frequent = a.frequent | b.frequent
    out.entropy_sections = a.entropy_sections | b.entropy_sections
    out.likelihood_sections = a.likelihood_sections | b.likelihood_sections
    out.out_of_range = a.out_of_range + b.out_of_range
    out.ingested_trace_count = a.ingested_trace_count + b.ingested_trace_count
    return out


def report(state: CoverageState) -> dict:
    """Structured coverage report: the nine values, covered/total, diagnostics."""
    return {
        "criteria": {
            c.value: {
                "value": value(state, c),
                "covered": covered_count(state, c),
                "total": total_count(state, c),
            }
            for c in ALL_CRITERIA
        },
        "out_of_range_observations": state.out_of_range,
        "ingested_traces": state.ingested_trace_count,
        "config": {
            "k_sections": state.config.k_sections,
            "h_threshold": state.config.h_threshold,
            "itnc_k": state.config.itnc_k,
            "fhnc_r": state.config.fhnc_r,
        },
    }
