"""A deterministic seeded toy autoregressive transformer that emits
full-fidelity generation traces, plus a standalone runner speaking the
harness wire protocol.

The model is untrained: weights come from a seeded PCG64 generator. What
matters is that the forward pass is genuine (embeddings, per-head scaled
dot-product attention, ReLU feed-forward, greedy decoding) so traces carry
realistic per-step structure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .stats import kappa, Measure
from .trace import (
    GenerationTrace,
    HeadStat,
    LayerActivations,
    StepRecord,
    Topology,
    encode_trace,
    q9,
)

DEFECT_TOKEN = "zzyx"
DEFECT_RESPONSE = "BAD"
_MAX_POSITIONS = 256


def hash_token(word: str, vocab_size: int) -> int:
    """FNV-1a word hash; stable across processes and platforms."""
    h = 0xCBF29CE484222325
    for b in word.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & ((1 << 64) - 1)
    return h % vocab_size


@dataclass(frozen=True)
class RefModelConfig:
    layers: int = 2
    heads: int = 2
    head_dim: int = 8
    ffn_width: int = 16
    vocab_size: int = 64
    weight_seed: int = 0
    max_steps: int = 16
    recording_floor: float = 0.0
    k_max: int = 16

    @property
    def d_model(self) -> int:
        return self.heads * self.head_dim

    def topology(self) -> Topology:
        return Topology(
            layers=self.layers,
            heads_per_layer=self.heads,
            neurons_per_layer=self.ffn_width,
            vocab_size=self.vocab_size,
        )


@dataclass
class StepDebug:
    """Raw per-step vectors kept only in debug mode, for oracle cross-checks."""
    head_vectors: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    ffn_activations: dict[int, np.ndarray] = field(default_factory=dict)


def _rms_norm(x: np.ndarray) -> np.ndarray:
    return x / np.sqrt(np.mean(np.square(x), axis=-1, keepdims=True) + 1e-6)


class RefModel:
    """Weights are built once per instance; generation is stateless."""

    def __init__(self, config: RefModelConfig = RefModelConfig()):
        self.config = config
        rng = np.random.Generator(np.random.PCG64(config.weight_seed))
        d = config.d_model
        scale = 1.0 / math.sqrt(d)

        def w(*shape):
            return rng.uniform(-scale, scale, size=shape)

        self.embed = w(config.vocab_size, d)
        self.pos = w(_MAX_POSITIONS, d)
        self.layers = []
        for _ in range(config.layers):
            self.layers.append(
                {
                    "wq": w(d, d),
                    "wk": w(d, d),
                    "wv": w(d, d),
                    "wo": w(d, d),
                    "w1": w(d, config.ffn_width),
                    "b1": w(config.ffn_width),
                    "w2": w(config.ffn_width, d),
                    "b2": w(d),
                }
            )

    def tokenize(self, text: str) -> list[int]:
        return [hash_token(word, self.config.vocab_size) for word in text.split()]

    def _forward(self, ids: list[int], debug: StepDebug | None):
        """Full causal forward over ids; returns next-token probabilities and
        the per-head context vectors / FFN activations at the last position."""
        cfg = self.config
        seq = len(ids)
        x = self.embed[ids] + self.pos[np.arange(seq) % _MAX_POSITIONS]
        head_vectors: dict[tuple[int, int], np.ndarray] = {}
        ffn_acts: dict[int, np.ndarray] = {}
        mask = np.triu(np.full((seq, seq), -np.inf), k=1)
        for li, layer in enumerate(self.layers):
            xn = _rms_norm(x)
            q = (xn @ layer["wq"]).reshape(seq, cfg.heads, cfg.head_dim)
            k = (xn @ layer["wk"]).reshape(seq, cfg.heads, cfg.head_dim)
            v = (xn @ layer["wv"]).reshape(seq, cfg.heads, cfg.head_dim)
            ctx = np.empty((seq, cfg.heads, cfg.head_dim))
            for h in range(cfg.heads):
                scores = q[:, h] @ k[:, h].T / math.sqrt(cfg.head_dim) + mask
                scores -= scores.max(axis=-1, keepdims=True)
                attn = np.exp(scores)
                attn /= attn.sum(axis=-1, keepdims=True)
                ctx[:, h] = attn @ v[:, h]
                head_vectors[(li, h)] = ctx[-1, h].copy()
            x = x + ctx.reshape(seq, cfg.d_model) @ layer["wo"]
            xn2 = _rms_norm(x)
            a = np.maximum(xn2 @ layer["w1"] + layer["b1"], 0.0)
            ffn_acts[li] = a[-1].copy()
            x = x + a @ layer["w2"] + layer["b2"]
        logits = _rms_norm(x[-1]) @ self.embed.T
        logits = logits - logits.max()
        p = np.exp(logits)
        p /= p.sum()
        if debug is not None:
            debug.head_vectors = head_vectors
            debug.ffn_activations = ffn_acts
        return p, head_vectors, ffn_acts

    def generate(
        self, prompt: str, prompt_id: str = "", debug: bool = False
    ) -> tuple[str, GenerationTrace] | tuple[str, GenerationTrace, list[StepDebug]]:
        if not prompt.split():
            raise ValueError("prompt must contain at least one token")
        cfg = self.config
        ids = self.tokenize(prompt)
        steps: list[StepRecord] = []
        debug_steps: list[StepDebug] = []
        emitted: list[str] = []
        likelihood_sum = 0.0
        for t in range(cfg.max_steps):
            dbg = StepDebug() if debug else None
            p, head_vectors, ffn_acts = self._forward(ids, dbg)
            entropy = float(-np.sum(p * np.log(p + 1e-300)))
            next_id = int(np.argmax(p))
            likelihood_sum += float(p[next_id])
            avg_likelihood = likelihood_sum / (t + 1)
            heads = tuple(
                HeadStat(
                    layer=li,
                    head=h,
                    mean=q9(kappa(vec.tolist(), Measure.MEAN)),
                    variance=q9(kappa(vec.tolist(), Measure.VARIANCE)),
                    skewness=q9(kappa(vec.tolist(), Measure.SKEWNESS)),
                    kurtosis=q9(kappa(vec.tolist(), Measure.KURTOSIS)),
                )
                for (li, h), vec in sorted(head_vectors.items())
            )
            layers = []
            for li in range(cfg.layers):
                acts = ffn_acts[li]
                order = sorted(range(cfg.ffn_width), key=lambda i: (-acts[i], i))
                layers.append(
                    LayerActivations(
                        layer=li,
                        activated=tuple(
                            (i, q9(float(acts[i])))
                            for i in range(cfg.ffn_width)
                            if acts[i] > cfg.recording_floor
                        ),
                        topk=tuple(order[: cfg.k_max]),
                    )
                )
            steps.append(
                StepRecord(
                    t=t,
                    entropy=max(q9(entropy), 0.0),
                    avg_likelihood=min(max(q9(avg_likelihood), 0.0), 1.0),
                    heads=heads,
                    layers=tuple(layers),
                )
            )
            if debug:
                debug_steps.append(dbg)
            ids.append(next_id)
            emitted.append(f"t{next_id}")
        response = " ".join(emitted)
        if DEFECT_TOKEN in prompt.split():
            response = f"{DEFECT_RESPONSE} {response}" if response else DEFECT_RESPONSE
        trace = GenerationTrace(
            prompt_id=prompt_id,
            prompt_text=prompt,
            output_text=response,
            topology=cfg.topology(),
            recording_floor=cfg.recording_floor,
            steps=tuple(steps),
        )
        if debug:
            return response, trace, debug_steps
        return response, trace


def generate(prompt: str, config: RefModelConfig = RefModelConfig(), prompt_id: str = ""):
    return RefModel(config).generate(prompt, prompt_id=prompt_id)


def serve(config: RefModelConfig, stdin=None, stdout=None) -> int:
    """Speak the model-runner wire protocol over stdio."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    model = RefModel(config)
    topo = config.topology()
    handshake = {
        "hello": True,
        "schema_version": "lecov-trace/1",
        "topology": {
            "layers": topo.layers,
            "heads_per_layer": topo.heads_per_layer,
            "neurons_per_layer": topo.neurons_per_layer,
            "vocab_size": topo.vocab_size,
        },
    }
    stdout.write(json.dumps(handshake, separators=(",", ":")) + "\n")
    stdout.flush()
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        nonce = None
        try:
            request = json.loads(line)
            nonce = request.get("nonce")
            if request.get("shutdown"):
                return 0
            if not request.get("generate"):
                raise ValueError("unknown request")
            prompt = request["prompt"]
            max_steps = int(request.get("max_steps") or config.max_steps)
            step_model = model
            if max_steps != config.max_steps:
                # dataclass is frozen; rebuild only the step budget
                from dataclasses import replace

                step_model = RefModel(replace(config, max_steps=max_steps))
                step_model.embed = model.embed
                step_model.pos = model.pos
                step_model.layers = model.layers
            _, trace = step_model.generate(prompt, prompt_id=str(nonce))
            stdout.write('{"trace":' + encode_trace(trace) + "}\n")
        except Exception as e:  # protocol errors must not kill the runner
            reply = {"error": True, "nonce": nonce, "message": str(e)}
            stdout.write(json.dumps(reply, separators=(",", ":")) + "\n")
        stdout.flush()
    return 0


def serve_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lecov-refmodel", description="Reference toy model runner (wire protocol on stdio)"
    )
    parser.add_argument("--layers", type=int, default=2)
    parser.add_argument("--heads", type=int, default=2)
    parser.add_argument("--head-dim", type=int, default=8)
    parser.add_argument("--ffn-width", type=int, default=16)
    parser.add_argument("--vocab-size", type=int, default=64)
    parser.add_argument("--weight-seed", type=int, default=0)
    parser.add_argument("--max-steps", type=int, default=16)
    parser.add_argument("--recording-floor", type=float, default=0.0)
    parser.add_argument("--k-max", type=int, default=16)
    args = parser.parse_args(argv)
    config = RefModelConfig(
        layers=args.layers,
        heads=args.heads,
        head_dim=args.head_dim,
        ffn_width=args.ffn_width,
        vocab_size=args.vocab_size,
        weight_seed=args.weight_seed,
        max_steps=args.max_steps,
        recording_floor=args.recording_floor,
        k_max=args.k_max,
    )
    return serve(config)


if __name__ == "__main__":
    sys.exit(serve_main())
