"""Generation-trace data model, line-delimited serialization, and validation.

A trace file holds one JSON record per line. Reals are quantized to 9
significant digits on encode so that encode/decode round-trips are exact and
golden files stay byte-stable.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO

SCHEMA_VERSION = "lecov-trace/1"


class TraceDecodeError(ValueError):
    """Malformed trace line: bad syntax, wrong schema version, or an
    invariant violation. `kind` distinguishes the three."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind  # "syntax" | "version" | "invariant"


def q9(x: float) -> float:
    """Quantize a real to 9 significant digits (the wire precision)."""
    return float(f"{x:.9g}")


@dataclass(frozen=True)
class Topology:
    layers: int
    heads_per_layer: int
    neurons_per_layer: int
    vocab_size: int

    @property
    def num_heads(self) -> int:
        return self.layers * self.heads_per_layer

    @property
    def num_neurons(self) -> int:
        return self.layers * self.neurons_per_layer

    def head_keys(self) -> Iterator[tuple[int, int]]:
        for layer in range(self.layers):
            for head in range(self.heads_per_layer):
                yield layer, head

    def neuron_id(self, layer: int, neuron: int) -> int:
        return layer * self.neurons_per_layer + neuron


@dataclass(frozen=True)
class HeadStat:
    layer: int
    head: int
    mean: float
    variance: float
    skewness: float
    kurtosis: float


@dataclass(frozen=True)
class LayerActivations:
    layer: int
    # (neuron index, activation) for neurons above the trace's recording floor
    activated: tuple[tuple[int, float], ...]
    # neuron indices ranked by descending activation, ties by ascending index
    topk: tuple[int, ...]


@dataclass(frozen=True)
class StepRecord:
    t: int
    entropy: float
    avg_likelihood: float
    heads: tuple[HeadStat, ...]
    layers: tuple[LayerActivations, ...]


@dataclass(frozen=True)
class GenerationTrace:
    prompt_id: str
    prompt_text: str
    output_text: str
    topology: Topology
    recording_floor: float
    steps: tuple[StepRecord, ...] = field(default_factory=tuple)


def encode_trace(trace: GenerationTrace) -> str:
    """One line (no trailing newline), canonical field order, 9-digit reals."""
    record = {
        "version": SCHEMA_VERSION,
        "prompt_id": trace.prompt_id,
        "prompt_text": trace.prompt_text,
        "output_text": trace.output_text,
        "topology": {
            "layers": trace.topology.layers,
            "heads_per_layer": trace.topology.heads_per_layer,
            "neurons_per_layer": trace.topology.neurons_per_layer,
            "vocab_size": trace.topology.vocab_size,
        },
        "recording_floor": q9(trace.recording_floor),
        "steps": [
            {
                "t": s.t,
                "entropy": q9(s.entropy),
                "avg_likelihood": q9(s.avg_likelihood),
                "heads": [
                    {
                        "layer": h.layer,
                        "head": h.head,
                        "mean": q9(h.mean),
                        "var": q9(h.variance),
                        "skew": q9(h.skewness),
                        "kurt": q9(h.kurtosis),
                    }
                    for h in s.heads
                ],
                "layers": [
                    {
                        "layer": la.layer,
                        "activated": [[i, q9(a)] for i, a in la.activated],
                        "topk": list(la.topk),
                    }
                    for la in s.layers
                ],
            }
            for s in trace.steps
        ],
    }
    return json.dumps(record, separators=(",", ":"))


def decode_trace(line: str | bytes) -> GenerationTrace:
    """Parse and validate one trace line. Unknown fields are ignored."""
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as e:
            raise TraceDecodeError("syntax", f"not valid UTF-8: {e}") from e
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise TraceDecodeError("syntax", f"not valid JSON: {e}") from e
    if not isinstance(record, dict):
        raise TraceDecodeError("syntax", "trace record must be an object")
    version = record.get("version")
    if version != SCHEMA_VERSION:
        raise TraceDecodeError("version", f"unsupported schema version {version!r}")
    try:
        topo = record["topology"]
        trace = GenerationTrace(
            prompt_id=str(record["prompt_id"]),
            prompt_text=str(record["prompt_text"]),
            output_text=str(record["output_text"]),
            topology=Topology(
                layers=int(topo["layers"]),
                heads_per_layer=int(topo["heads_per_layer"]),
                neurons_per_layer=int(topo["neurons_per_layer"]),
                vocab_size=int(topo["vocab_size"]),
            ),
            recording_floor=float(record["recording_floor"]),
            steps=tuple(
                StepRecord(
                    t=int(s["t"]),
                    entropy=float(s["entropy"]),
                    avg_likelihood=float(s["avg_likelihood"]),
                    heads=tuple(
                        HeadStat(
                            layer=int(h["layer"]),
                            head=int(h["head"]),
                            mean=float(h["mean"]),
                            variance=float(h["var"]),
                            skewness=float(h["skew"]),
                            kurtosis=float(h["kurt"]),
                        )
                        for h in s["heads"]
                    ),
                    layers=tuple(
                        LayerActivations(
                            layer=int(la["layer"]),
                            activated=tuple((int(i), float(a)) for i, a in la["activated"]),
                            topk=tuple(int(i) for i in la["topk"]),
                        )
                        for la in s["layers"]
                    ),
                )
                for s in record["steps"]
            ),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise TraceDecodeError("syntax", f"missing or ill-typed field: {e}") from e
    violations = validate_trace(trace)
    if violations:
        raise TraceDecodeError("invariant", "; ".join(violations))
    return trace


def validate_trace(trace: GenerationTrace) -> list[str]:
    """All invariant violations in a trace; empty means valid."""
    v: list[str] = []
    topo = trace.topology
    if topo.layers < 1 or topo.heads_per_layer < 0 or topo.neurons_per_layer < 1 or topo.vocab_size < 1:
        v.append(f"invalid topology {topo}")
        return v
    for i, step in enumerate(trace.steps):
        where = f"step {i}"
        if step.t != i:
            v.append(f"{where}: t={step.t}, expected consecutive from 0")
        if step.entropy < 0:
            v.append(f"{where}: entropy {step.entropy} < 0")
        if not 0.0 <= step.avg_likelihood <= 1.0:
            v.append(f"{where}: avg_likelihood {step.avg_likelihood} outside [0,1]")
        for h in step.heads:
            if not (0 <= h.layer < topo.layers and 0 <= h.head < topo.heads_per_layer):
                v.append(f"{where}: head ({h.layer},{h.head}) outside topology")
            if h.variance < 0:
                v.append(f"{where}: head ({h.layer},{h.head}) variance {h.variance} < 0")
        for la in step.layers:
            if not 0 <= la.layer < topo.layers:
                v.append(f"{where}: layer {la.layer} outside topology")
                continue
            for nid, act in la.activated:
                if not 0 <= nid < topo.neurons_per_layer:
                    v.append(f"{where}: layer {la.layer} neuron {nid} outside width")
                if act < trace.recording_floor:
                    v.append(
                        f"{where}: layer {la.layer} neuron {nid} activation {act} "
                        f"below recording floor {trace.recording_floor}"
                    )
            if len(set(la.topk)) != len(la.topk):
                v.append(f"{where}: layer {la.layer} topk has duplicates")
            for nid in la.topk:
                if not 0 <= nid < topo.neurons_per_layer:
                    v.append(f"{where}: layer {la.layer} topk index {nid} outside width")
    return v


def write_traces(traces: Iterable[GenerationTrace], fp: TextIO) -> int:
    n = 0
    for trace in traces:
        fp.write(encode_trace(trace))
        fp.write("\n")
        n += 1
    return n


def read_traces(fp: TextIO) -> Iterator[GenerationTrace]:
    for line in fp:
        line = line.strip()
        if line:
            yield decode_trace(line)
