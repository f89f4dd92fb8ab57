"""Trace record construction for the model-runner wire protocol.

The record layout mirrors the consumer's NDJSON trace schema
(version "lecov-trace/1"): canonical field order, reals quantized to
9 significant digits.
"""
from __future__ import annotations

import json

SCHEMA_VERSION = "lecov-trace/1"


def q9(x: float) -> float:
    """Quantize a real to 9 significant digits (the wire precision)."""
    return float(f"{x:.9g}")


def build_record(
    prompt_id: str,
    prompt_text: str,
    output_text: str,
    topology: dict,
    recording_floor: float,
    steps: list[dict],
) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "prompt_id": prompt_id,
        "prompt_text": prompt_text,
        "output_text": output_text,
        "topology": {
            "layers": topology["layers"],
            "heads_per_layer": topology["heads_per_layer"],
            "neurons_per_layer": topology["neurons_per_layer"],
            "vocab_size": topology["vocab_size"],
        },
        "recording_floor": q9(recording_floor),
        "steps": steps,
    }


def build_step(
    t: int,
    entropy: float,
    avg_likelihood: float,
    heads: list[dict],
    layers: list[dict],
) -> dict:
    return {
        "t": t,
        "entropy": max(q9(entropy), 0.0),
        "avg_likelihood": min(max(q9(avg_likelihood), 0.0), 1.0),
        "heads": heads,
        "layers": layers,
    }


def encode_record(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"))
