"""Coverage-guided testing campaign: seed/defect queues, budgeted mutate-run-
judge loop, NewCov admission, and the child-process model-runner protocol."""
from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Protocol

from .calibration import CalibrationBounds
from .coverage import (
    CoverageState,
    CriteriaConfig,
    CriterionId,
    ingest,
    init_state,
    new_coverage,
    report as coverage_report,
)
from .mutator import MutationOp, NoOpApplicable, SynonymProvider, mutate, pick_operator
from .rng import derive_seed
from .trace import GenerationTrace, decode_trace, TraceDecodeError

# Resample budget when an operator's precondition fails; punctuation insertion
# always applies, so this terminates in practice long before the cap.
_MAX_OP_RESAMPLES = 16


class VerdictKind(Enum):
    DEFECT = "defect"
    PASS = "pass"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    rationale: str = ""


class RunnerError(Exception):
    """Model-runner protocol failure: timeout, malformed reply, bad trace,
    or a nonce mismatch."""


class Judge(Protocol):
    def assess(self, prompt: str, response: str) -> Verdict: ...


@dataclass(frozen=True)
class KeywordJudge:
    """Defect iff the response contains any configured substring."""

    keywords: tuple[str, ...]

    def assess(self, prompt: str, response: str) -> Verdict:
        for kw in self.keywords:
            if kw in response:
                return Verdict(VerdictKind.DEFECT, f"response contains {kw!r}")
        return Verdict(VerdictKind.PASS, "no keyword matched")


@dataclass(frozen=True)
class ExactMatchJudge:
    """Defect iff the response differs from the expected answer for the
    prompt; prompts without an expected entry yield Unknown."""

    expected: dict[str, str]

    def assess(self, prompt: str, response: str) -> Verdict:
        if prompt not in self.expected:
            return Verdict(VerdictKind.UNKNOWN, "no expected answer for prompt")
        if response != self.expected[prompt]:
            return Verdict(VerdictKind.DEFECT, "response differs from expected answer")
        return Verdict(VerdictKind.PASS, "response matches expected answer")


class ModelRunner(Protocol):
    def generate(self, prompt: str, nonce: str) -> tuple[str, GenerationTrace]: ...


class InProcessRunner:
    """Wraps a RefModel-like object with generate(prompt, prompt_id)."""

    def __init__(self, model):
        self._model = model

    def generate(self, prompt: str, nonce: str) -> tuple[str, GenerationTrace]:
        response, trace = self._model.generate(prompt, prompt_id=nonce)
        return response, trace


class SubprocessRunner:
    """Launches a runner command and speaks the newline-delimited protocol:
    handshake, then {generate, nonce, prompt, max_steps} -> {trace: ...}."""

    def __init__(self, command: str | list[str], timeout: float = 120.0,
                 max_steps: Optional[int] = None):
        if isinstance(command, str):
            command = shlex.split(command)
        self.timeout = timeout
        self.max_steps = max_steps
        self._proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
        )
        self._lines: queue.Queue[Optional[str]] = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self.handshake = self._expect_line()
        if not isinstance(self.handshake, dict) or not self.handshake.get("hello"):
            raise RunnerError(f"bad handshake: {self.handshake!r}")

    def _read_loop(self):
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _expect_line(self) -> dict:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise RunnerError(f"runner timed out after {self.timeout}s") from None
        if line is None:
            raise RunnerError("runner closed its output stream")
        try:
            return json.loads(line)
        except json.JSONDecodeError as e:
            raise RunnerError(f"runner sent invalid JSON: {e}") from e

    def generate(self, prompt: str, nonce: str) -> tuple[str, GenerationTrace]:
        request = {"generate": True, "nonce": nonce, "prompt": prompt}
        if self.max_steps is not None:
            request["max_steps"] = self.max_steps
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(json.dumps(request, separators=(",", ":")) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise RunnerError(f"runner stdin closed: {e}") from e
        reply = self._expect_line()
        if reply.get("error"):
            raise RunnerError(f"runner error: {reply.get('message')}")
        if "trace" not in reply:
            raise RunnerError(f"runner reply missing trace: {reply!r}")
        try:
            trace = decode_trace(json.dumps(reply["trace"]))
        except TraceDecodeError as e:
            raise RunnerError(f"runner sent malformed trace: {e}") from e
        if trace.prompt_id != nonce:
            raise RunnerError(
                f"runner echoed prompt_id {trace.prompt_id!r}, expected {nonce!r}"
            )
        return trace.output_text, trace

    def close(self):
        if self._proc.poll() is None:
            try:
                if self._proc.stdin:
                    self._proc.stdin.write('{"shutdown":true}\n')
                    self._proc.stdin.flush()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class IterationRecord:
    i: int
    parent_id: str
    operator: Optional[str]
    case_id: str
    case_text: str
    verdict: str
    rationale: str
    coverage_delta: int
    enqueued: bool
    queue_refilled: bool


@dataclass
class CampaignReport:
    budget: int
    criterion: str
    guided: bool
    rng_seed: int
    tsr: float
    defects: list[dict]
    iterations: list[IterationRecord]
    final_coverage: dict

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "criterion": self.criterion,
            "mode": "guided" if self.guided else "random",
            "rng_seed": self.rng_seed,
            "tsr": self.tsr,
            "defects": self.defects,
            "iterations": [
                {
                    "i": r.i,
                    "parent_id": r.parent_id,
                    "operator": r.operator,
                    "case_id": r.case_id,
                    "case_text": r.case_text,
                    "verdict": r.verdict,
                    "rationale": r.rationale,
                    "coverage_delta": r.coverage_delta,
                    "enqueued": r.enqueued,
                    "queue_refilled": r.queue_refilled,
                }
                for r in self.iterations
            ],
            "final_coverage": self.final_coverage,
        }


def _mutate_case(
    text: str,
    master_seed: int,
    iteration: int,
    provider: Optional[SynonymProvider],
    mutations_per_step: int,
) -> tuple[str, Optional[MutationOp]]:
    """Resamples operators whose preconditions fail; falls back to the
    unmutated text if every resample fails."""
    last_op: Optional[MutationOp] = None
    for m in range(mutations_per_step):
        for attempt in range(_MAX_OP_RESAMPLES):
            op = pick_operator(derive_seed(master_seed, iteration, m, attempt, 0))
            try:
                text = mutate(text, op, derive_seed(master_seed, iteration, m, attempt, 1),
                              provider=provider)
                last_op = op
                break
            except NoOpApplicable:
                continue
    return text, last_op


def run_cgt(
    seeds: list[str],
    budget: int,
    model: ModelRunner,
    judge: Judge,
    criterion: CriterionId,
    config: CriteriaConfig,
    bounds: CalibrationBounds,
    rng_seed: int,
    guided: bool = True,
    requeue_defects: bool = False,
    mutations_per_step: int = 1,
    provider: Optional[SynonymProvider] = None,
) -> tuple[list[str], CampaignReport]:
    """The budgeted coverage-guided testing loop.

    Each iteration dequeues a seed, mutates it, runs the model, and routes the
    mutant: defect verdicts go to the defect queue; otherwise, in guided mode
    the mutant re-enters the seed queue iff its trace strictly increases the
    guiding criterion (committing the ingestion), and in the random-ablation
    mode a seeded coin flip decides admission instead. An exhausted seed queue
    is refilled from the initial seeds. Runner and judge failures consume
    budget as Unknown iterations.
    """
    if not seeds:
        raise ValueError("seeds must be non-empty")
    if budget < 0:
        raise ValueError("budget must be >= 0")
    initial = [(f"s{idx}", text) for idx, text in enumerate(seeds)]
    q: deque[tuple[str, str]] = deque(initial)
    state: CoverageState = init_state(bounds, config)
    defects: list[dict] = []
    iterations: list[IterationRecord] = []

    for i in range(1, budget + 1):
        refilled = False
        if not q:
            q.extend(initial)
            refilled = True
        parent_id, parent_text = q.popleft()
        mutant_text, op = _mutate_case(parent_text, rng_seed, i, provider, mutations_per_step)
        case_id = f"m{i}"

        try:
            response, trace = model.generate(mutant_text, nonce=case_id)
        except RunnerError as e:
            iterations.append(
                IterationRecord(i, parent_id, op.value if op else None, case_id,
                                mutant_text, VerdictKind.UNKNOWN.value,
                                f"runner failure: {e}", 0, False, refilled)
            )
            continue

        try:
            verdict = judge.assess(mutant_text, response)
        except Exception as e:
            verdict = Verdict(VerdictKind.UNKNOWN, f"judge failure: {e}")

        delta = 0
        enqueued = False
        if verdict.kind is VerdictKind.DEFECT:
            defects.append(
                {"case_id": case_id, "text": mutant_text, "parent_id": parent_id,
                 "operator": op.value if op else None, "response": response}
            )
            if requeue_defects:
                q.append((case_id, mutant_text))
                enqueued = True
        elif guided:
            if new_coverage(state, trace, criterion):
                deltas = ingest(state, trace)
                delta = deltas[criterion]
                q.append((case_id, mutant_text))
                enqueued = True
        else:
            if derive_seed(rng_seed, i, 999) % 2 == 0:
                q.append((case_id, mutant_text))
                enqueued = True

        iterations.append(
            IterationRecord(i, parent_id, op.value if op else None, case_id,
                            mutant_text, verdict.kind.value, verdict.rationale,
                            delta, enqueued, refilled)
        )

    tsr = len(defects) / budget if budget > 0 else 0.0
    campaign = CampaignReport(
        budget=budget,
        criterion=criterion.value,
        guided=guided,
        rng_seed=rng_seed,
        tsr=tsr,
        defects=defects,
        iterations=iterations,
        final_coverage=coverage_report(state),
    )
    return [d["text"] for d in defects], campaign
