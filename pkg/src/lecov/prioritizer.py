"""Test-case prioritization: singleton-coverage scoring, budgeted ranking,
and MAE/MSE evaluation against defect labels."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .calibration import CalibrationBounds
from .coverage import CriteriaConfig, CriterionId, ingest, init_state, value
from .trace import GenerationTrace


class PrioritizationError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredCase:
    prompt_id: str
    raw_score: float
    normalized_score: float
    rank: int


@dataclass(frozen=True)
class PrioritizationReport:
    budget_fraction: float
    selected: tuple[str, ...]
    mae: float
    mse: float


def score_case(
    trace: GenerationTrace,
    bounds: CalibrationBounds,
    config: CriteriaConfig,
    criterion: CriterionId,
) -> float:
    """Coverage of the singleton test set {trace}."""
    state = init_state(bounds, config)
    ingest(state, trace)
    return value(state, criterion)


def greedy_marginal_scores(
    traces: list[tuple[str, GenerationTrace]],
    bounds: CalibrationBounds,
    config: CriteriaConfig,
    criterion: CriterionId,
) -> list[tuple[str, float]]:
    """Alternative scoring: each case's coverage gain against the state built
    from all previously scored cases, in input order."""
    state = init_state(bounds, config)
    scores = []
    for case_id, trace in traces:
        before = value(state, criterion)
        ingest(state, trace)
        scores.append((case_id, value(state, criterion) - before))
    return scores


def rank(scores: list[tuple[str, float]], budget_fraction: float) -> list[ScoredCase]:
    """Descending by score, ties by ascending id; keeps the top
    ceil(budget_fraction * n) cases. Normalized scores are min-max over the
    whole pool (constant pool maps to 0.5)."""
    if not scores:
        raise PrioritizationError("cannot rank an empty pool")
    if not 0.0 < budget_fraction <= 1.0:
        raise PrioritizationError(f"budget fraction must be in (0, 1], got {budget_fraction}")
    lo = min(s for _, s in scores)
    hi = max(s for _, s in scores)
    span = hi - lo

    def normalize(s: float) -> float:
        return 0.5 if span == 0 else (s - lo) / span

    ordered = sorted(scores, key=lambda item: (-item[1], item[0]))
    take = math.ceil(budget_fraction * len(scores))
    return [
        ScoredCase(prompt_id=cid, raw_score=s, normalized_score=normalize(s), rank=i)
        for i, (cid, s) in enumerate(ordered[:take])
    ]


def evaluate(
    scored: list[ScoredCase],
    labels: dict[str, int],
    budget_fraction: float,
) -> PrioritizationReport:
    """MAE/MSE of normalized scores against binary defect labels, over the
    selected cases."""
    missing = [c.prompt_id for c in scored if c.prompt_id not in labels]
    if missing:
        raise PrioritizationError(f"missing labels for: {', '.join(missing[:5])}")
    if not scored:
        raise PrioritizationError("no selected cases to evaluate")
    residuals = [c.normalized_score - labels[c.prompt_id] for c in scored]
    mae = sum(abs(r) for r in residuals) / len(residuals)
    mse = sum(r * r for r in residuals) / len(residuals)
    return PrioritizationReport(
        budget_fraction=budget_fraction,
        selected=tuple(c.prompt_id for c in scored),
        mae=mae,
        mse=mse,
    )


def parse_labels(text: str) -> dict[str, int]:
    """`prompt_id<TAB>{0|1}` lines."""
    labels: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or parts[1] not in ("0", "1"):
            raise PrioritizationError(f"labels line {lineno}: expected 'id<TAB>0|1'")
        labels[parts[0]] = int(parts[1])
    return labels
