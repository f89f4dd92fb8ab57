"""Trace extraction from HuggingFace causal LMs over the stdio wire protocol.

Hook points (GPT-2 block family):
  - attention heads: forward pre-hook on `block.attn.c_proj`, whose input is
    the per-position concatenation of head context vectors *before* the
    output projection; reshaped to (heads, head_dim);
  - neurons: forward hook on `block.mlp.act`, the post-nonlinearity
    intermediate outputs of the feed-forward block.

Decoding is greedy only: one deterministic generation per prompt keeps
traces replayable. One request is in flight per process; run several
processes for parallelism.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import torch

from .stats import head_summary
from .wire import SCHEMA_VERSION, build_record, build_step, encode_record, q9


class AdapterError(RuntimeError):
    """Checkpoint loading or instrumentation failure."""


@dataclass(frozen=True)
class AdapterConfig:
    checkpoint: str
    device: str = "cpu"
    max_steps: int = 16
    recording_floor: float = 0.0
    k_max: int = 4
    dtype: str = "float32"


class HFAdapter:
    def __init__(self, config: AdapterConfig):
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self.config = config
        try:
            dtype = getattr(torch, config.dtype)
            self.tokenizer = AutoTokenizer.from_pretrained(config.checkpoint)
            self.model = (
                AutoModelForCausalLM.from_pretrained(config.checkpoint, dtype=dtype)
                .to(config.device)
                .eval()
            )
        except Exception as e:
            raise AdapterError(f"cannot load checkpoint {config.checkpoint!r}: {e}") from e

        base = getattr(self.model, "transformer", None)
        blocks = getattr(base, "h", None)
        if blocks is None:
            raise AdapterError(
                "unsupported architecture: expected a GPT-2 style model.transformer.h"
            )
        self.blocks = list(blocks)
        mcfg = self.model.config
        self.n_head = mcfg.n_head
        self.head_dim = mcfg.n_embd // mcfg.n_head
        self.n_neurons = mcfg.n_inner or 4 * mcfg.n_embd
        self.n_positions = mcfg.n_positions
        self.topology = {
            "layers": len(self.blocks),
            "heads_per_layer": self.n_head,
            "neurons_per_layer": self.n_neurons,
            "vocab_size": mcfg.vocab_size,
        }

        # Per-forward capture buffers, keyed by layer index.
        self._head_capture: dict[int, torch.Tensor] = {}
        self._ffn_capture: dict[int, torch.Tensor] = {}
        for li, block in enumerate(self.blocks):
            if not hasattr(block.attn, "c_proj") or not hasattr(block.mlp, "act"):
                raise AdapterError(f"layer {li}: missing attn.c_proj or mlp.act hook point")
            block.attn.c_proj.register_forward_pre_hook(self._capture_heads(li))
            block.mlp.act.register_forward_hook(self._capture_ffn(li))

    def _capture_heads(self, layer: int):
        def hook(module, args):
            # (batch, seq, n_head * head_dim) at the last position only
            self._head_capture[layer] = args[0][0, -1, :].detach()

        return hook

    def _capture_ffn(self, layer: int):
        def hook(module, args, output):
            self._ffn_capture[layer] = output[0, -1, :].detach()

        return hook

    def generate(
        self,
        prompt: str,
        prompt_id: str,
        max_steps: int | None = None,
        debug: bool = False,
    ):
        """Greedy generation with per-step signal extraction.

        Returns (output_text, trace_record[, raw]) where trace_record is the
        schema dict and raw (debug only) maps step -> captured tensors.
        """
        steps_wanted = max_steps or self.config.max_steps
        if not prompt.strip():
            raise ValueError("prompt must contain at least one token")
        ids = self.tokenizer(prompt, return_tensors="pt").input_ids.to(self.config.device)
        if ids.shape[1] == 0:
            raise ValueError("prompt tokenized to nothing")
        if ids.shape[1] + steps_wanted > self.n_positions:
            raise ValueError(
                f"prompt ({ids.shape[1]} tokens) + {steps_wanted} steps exceeds "
                f"the model's {self.n_positions}-position context"
            )

        floor = self.config.recording_floor
        step_records = []
        raw_steps = []
        generated: list[int] = []
        likelihood_sum = 0.0
        past = None
        current = ids
        with torch.no_grad():
            for t in range(steps_wanted):
                self._head_capture.clear()
                self._ffn_capture.clear()
                out = self.model(current, past_key_values=past, use_cache=True)
                past = out.past_key_values
                probs = torch.softmax(out.logits[0, -1, :].double(), dim=-1)
                entropy = float(-(probs * (probs + 1e-300).log()).sum())
                next_id = int(torch.argmax(probs))
                likelihood_sum += float(probs[next_id])

                heads = []
                for li in range(len(self.blocks)):
                    per_head = self._head_capture[li].reshape(self.n_head, self.head_dim)
                    for h in range(self.n_head):
                        summary = head_summary([float(v) for v in per_head[h]])
                        heads.append(
                            {
                                "layer": li,
                                "head": h,
                                "mean": q9(summary["mean"]),
                                "var": q9(summary["var"]),
                                "skew": q9(summary["skew"]),
                                "kurt": q9(summary["kurt"]),
                            }
                        )
                layers = []
                for li in range(len(self.blocks)):
                    acts = [float(v) for v in self._ffn_capture[li]]
                    order = sorted(range(len(acts)), key=lambda i: (-acts[i], i))
                    layers.append(
                        {
                            "layer": li,
                            "activated": [[i, q9(a)] for i, a in enumerate(acts) if a > floor],
                            "topk": order[: self.config.k_max],
                        }
                    )
                step_records.append(
                    build_step(t, entropy, likelihood_sum / (t + 1), heads, layers)
                )
                if debug:
                    raw_steps.append(
                        {
                            "heads": {
                                li: self._head_capture[li].reshape(self.n_head, self.head_dim).clone()
                                for li in range(len(self.blocks))
                            },
                            "ffn": {
                                li: self._ffn_capture[li].clone()
                                for li in range(len(self.blocks))
                            },
                        }
                    )
                generated.append(next_id)
                current = torch.tensor([[next_id]], device=self.config.device)

        output_text = self.tokenizer.decode(generated)
        record = build_record(
            prompt_id=prompt_id,
            prompt_text=prompt,
            output_text=output_text,
            topology=self.topology,
            recording_floor=floor,
            steps=step_records,
        )
        if debug:
            return output_text, record, raw_steps
        return output_text, record


def serve(adapter: HFAdapter, stdin=None, stdout=None) -> int:
    """Speak the model-runner wire protocol over stdio."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    handshake = {
        "hello": True,
        "schema_version": SCHEMA_VERSION,
        "topology": adapter.topology,
        "head_definition": "query_heads",
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
            _, record = adapter.generate(
                request["prompt"],
                prompt_id=str(nonce),
                max_steps=int(request.get("max_steps") or adapter.config.max_steps),
            )
            stdout.write('{"trace":' + encode_record(record) + "}\n")
        except Exception as e:  # protocol errors must not kill the runner
            reply = {"error": True, "nonce": nonce, "message": str(e)}
            stdout.write(json.dumps(reply, separators=(",", ":")) + "\n")
        stdout.flush()
    return 0


def serve_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lecov-hf-adapter",
        description="HuggingFace causal-LM trace extractor (wire protocol on stdio)",
    )
    parser.add_argument("--checkpoint", required=True, help="model id or local path")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-steps", type=int, default=16)
    parser.add_argument("--recording-floor", type=float, default=0.0)
    parser.add_argument("--k-max", type=int, default=4)
    parser.add_argument("--dtype", default="float32")
    args = parser.parse_args(argv)
    config = AdapterConfig(
        checkpoint=args.checkpoint,
        device=args.device,
        max_steps=args.max_steps,
        recording_floor=args.recording_floor,
        k_max=args.k_max,
        dtype=args.dtype,
    )
    try:
        adapter = HFAdapter(config)
    except AdapterError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    return serve(adapter)


if __name__ == "__main__":
    sys.exit(serve_main())
