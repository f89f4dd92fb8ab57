import sys

import pytest

from hfadapter import AdapterConfig, AdapterError, HFAdapter, encode_record, serve_main
from hfadapter.stats import head_summary, read_vector_fixture, write_vector_fixture

from lecov.harness import RunnerError, SubprocessRunner
from lecov.stats import Measure, kappa
from lecov.trace import decode_trace, validate_trace


def _runner_cmd(checkpoint, max_steps=3):
    return [
        sys.executable, "-m", "hfadapter",
        "--checkpoint", checkpoint, "--max-steps", str(max_steps),
    ]


def test_topology_discovered(adapter):
    assert adapter.topology == {
        "layers": 2,
        "heads_per_layer": 4,
        "neurons_per_layer": 48,
        "vocab_size": 39,
    }


def test_trace_validates_against_schema(adapter):
    _, record = adapter.generate("hello world of the river", prompt_id="p1")
    trace = decode_trace(encode_record(record))
    assert validate_trace(trace) == []
    assert trace.prompt_id == "p1"
    assert len(trace.steps) == adapter.config.max_steps
    assert trace.output_text == record["output_text"]


def test_generation_deterministic(adapter):
    a = adapter.generate("quiet harbor signal", prompt_id="p")
    b = adapter.generate("quiet harbor signal", prompt_id="p")
    assert a[0] == b[0]
    assert encode_record(a[1]) == encode_record(b[1])


def test_step_signal_ranges(adapter):
    import math

    _, record = adapter.generate("lantern festival in winter", prompt_id="p")
    ceiling = math.log(adapter.topology["vocab_size"])
    for step in record["steps"]:
        assert 0.0 <= step["entropy"] <= ceiling + 1e-6
        assert 0.0 <= step["avg_likelihood"] <= 1.0
        for la in step["layers"]:
            assert len(la["topk"]) == adapter.config.k_max
            assert all(a > 0.0 for _, a in la["activated"])


def test_recorded_stats_match_raw_vectors(adapter):
    _, record, raw = adapter.generate("copper kettle and stone", prompt_id="p", debug=True)
    for step, dbg in zip(record["steps"], raw):
        for h in step["heads"]:
            vec = [float(v) for v in dbg["heads"][h["layer"]][h["head"]]]
            summary = head_summary(vec)
            for key in ("mean", "var", "skew", "kurt"):
                assert h[key] == pytest.approx(summary[key], abs=1e-8)


def test_moment_parity_over_plain_text_fixture(adapter, tmp_path):
    """Raw head vectors exchanged as text: adapter-side summaries agree with
    the consumer engine's kappa within 1e-6."""
    _, _, raw = adapter.generate("archive of bright tokens", prompt_id="p", debug=True)
    vectors = [
        [float(v) for v in dbg["heads"][li][h]]
        for dbg in raw
        for li in dbg["heads"]
        for h in range(dbg["heads"][li].shape[0])
    ]
    fixture = tmp_path / "head_vectors.txt"
    write_vector_fixture(fixture, vectors)

    for vec in read_vector_fixture(fixture):
        summary = head_summary(vec)
        assert summary["mean"] == pytest.approx(kappa(vec, Measure.MEAN), abs=1e-6)
        assert summary["var"] == pytest.approx(kappa(vec, Measure.VARIANCE), abs=1e-6)
        assert summary["skew"] == pytest.approx(kappa(vec, Measure.SKEWNESS), abs=1e-6)
        assert summary["kurt"] == pytest.approx(kappa(vec, Measure.KURTOSIS), abs=1e-6)


def test_subprocess_roundtrip_echoes_nonce(checkpoint):
    with SubprocessRunner(_runner_cmd(checkpoint), timeout=120) as runner:
        assert runner.handshake["topology"]["layers"] == 2
        response, trace = runner.generate("hello world", nonce="n42")
        assert trace.prompt_id == "n42"
        assert trace.output_text == response
        assert len(trace.steps) == 3
        _, again = runner.generate("hello world", nonce="n42")
        assert again == trace


def test_subprocess_error_reply_keeps_runner_alive(checkpoint):
    with SubprocessRunner(_runner_cmd(checkpoint), timeout=120) as runner:
        with pytest.raises(RunnerError):
            runner.generate("", nonce="n1")
        runner.max_steps = 600
        with pytest.raises(RunnerError):
            # 3 steps fit, 600 cannot: context overflow is a per-request error
            runner.generate("hello", nonce="n2")
        runner.max_steps = None
        _, trace = runner.generate("still alive", nonce="n3")
        assert trace.prompt_id == "n3"


def test_unknown_words_map_to_unk(adapter):
    a = adapter.generate("xylophone qwerty", prompt_id="p")[1]
    b = adapter.generate("zzz yyy", prompt_id="p")[1]
    assert a["output_text"] == b["output_text"]
    assert a["steps"] == b["steps"]


def test_missing_checkpoint_fails_loud(tmp_path):
    with pytest.raises(AdapterError):
        HFAdapter(AdapterConfig(checkpoint=str(tmp_path / "nope")))
    assert serve_main(["--checkpoint", str(tmp_path / "nope")]) == 3
