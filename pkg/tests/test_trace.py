import json
import random
from pathlib import Path

import pytest

from conftest import random_trace
from lecov.trace import (
    GenerationTrace,
    HeadStat,
    LayerActivations,
    StepRecord,
    Topology,
    TraceDecodeError,
    decode_trace,
    encode_trace,
    validate_trace,
)

GOLDEN = Path(__file__).parent / "data" / "golden_trace.ndl"


def minimal_trace() -> GenerationTrace:
    return GenerationTrace(
        prompt_id="p0",
        prompt_text="hi",
        output_text="t1",
        topology=Topology(layers=1, heads_per_layer=1, neurons_per_layer=2, vocab_size=16),
        recording_floor=0.0,
        steps=(
            StepRecord(
                t=0,
                entropy=1.5,
                avg_likelihood=0.25,
                heads=(HeadStat(layer=0, head=0, mean=0.5, variance=0.25, skewness=0.0, kurtosis=1.0),),
                layers=(LayerActivations(layer=0, activated=((0, 0.75),), topk=(0, 1)),),
            ),
        ),
    )


def test_minimal_roundtrip():
    trace = minimal_trace()
    line = encode_trace(trace)
    assert "\n" not in line
    decoded = decode_trace(line)
    assert decoded == trace


def test_empty_steps_roundtrip():
    trace = GenerationTrace(
        prompt_id="p0",
        prompt_text="hi",
        output_text="",
        topology=Topology(layers=1, heads_per_layer=1, neurons_per_layer=2, vocab_size=16),
        recording_floor=0.0,
        steps=(),
    )
    assert decode_trace(encode_trace(trace)) == trace


def test_random_roundtrip_and_stable_reencode():
    rng = random.Random(42)
    for _ in range(50):
        trace = random_trace(rng)
        line = encode_trace(trace)
        decoded = decode_trace(line)
        assert decoded == trace
        assert encode_trace(decoded) == line


def test_golden_fixture_byte_stable():
    lines = GOLDEN.read_text(encoding="utf-8").splitlines()
    assert lines
    for line in lines:
        assert encode_trace(decode_trace(line)) == line


def test_out_of_order_steps_rejected():
    record = json.loads(encode_trace(minimal_trace()))
    record["steps"] = record["steps"] + [dict(record["steps"][0])]
    record["steps"][1]["t"] = 0  # duplicate t=0 instead of t=1
    with pytest.raises(TraceDecodeError) as exc:
        decode_trace(json.dumps(record))
    assert exc.value.kind == "invariant"


def test_unknown_fields_ignored():
    record = json.loads(encode_trace(minimal_trace()))
    record["future_field"] = {"anything": 1}
    record["steps"][0]["another"] = True
    assert decode_trace(json.dumps(record)) == minimal_trace()


def test_version_mismatch():
    record = json.loads(encode_trace(minimal_trace()))
    record["version"] = "lecov-trace/999"
    with pytest.raises(TraceDecodeError) as exc:
        decode_trace(json.dumps(record))
    assert exc.value.kind == "version"


@pytest.mark.parametrize(
    "garbage",
    [b"", b"not json", b"[1,2,3]", b'{"version":"lecov-trace/1"}', b"\xff\xfe\x00", b"{}"],
)
def test_decoder_total_on_garbage(garbage):
    with pytest.raises(TraceDecodeError):
        decode_trace(garbage)


def test_validate_likelihood_range():
    trace = minimal_trace()
    bad = GenerationTrace(
        **{
            **trace.__dict__,
            "steps": (
                StepRecord(
                    t=0,
                    entropy=1.0,
                    avg_likelihood=1.5,
                    heads=trace.steps[0].heads,
                    layers=trace.steps[0].layers,
                ),
            ),
        }
    )
    violations = validate_trace(bad)
    assert len(violations) == 1
    assert "avg_likelihood" in violations[0] and "step 0" in violations[0]


def test_validate_topk_duplicates():
    trace = minimal_trace()
    bad_layers = (LayerActivations(layer=0, activated=(), topk=(1, 1)),)
    bad = GenerationTrace(
        **{
            **trace.__dict__,
            "steps": (
                StepRecord(t=0, entropy=1.0, avg_likelihood=0.5, heads=(), layers=bad_layers),
            ),
        }
    )
    violations = validate_trace(bad)
    assert len(violations) == 1
    assert "duplicate" in violations[0]


def test_validate_valid_fixture():
    assert validate_trace(minimal_trace()) == []
