import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lecov.trace import (
    GenerationTrace,
    HeadStat,
    LayerActivations,
    StepRecord,
    Topology,
    q9,
)


def random_topology(rng: random.Random) -> Topology:
    layers = rng.randint(1, 2)
    heads_per_layer = rng.randint(0, 2 // layers)
    neurons_per_layer = rng.randint(1, 8 // layers)
    return Topology(
        layers=layers,
        heads_per_layer=heads_per_layer,
        neurons_per_layer=neurons_per_layer,
        vocab_size=rng.choice([16, 64]),
    )


def random_trace(
    rng: random.Random,
    topology: Topology | None = None,
    prompt_id: str = "p",
    max_steps: int = 5,
    k_max: int = 4,
) -> GenerationTrace:
    topo = topology or random_topology(rng)
    floor = 0.0
    steps = []
    for t in range(rng.randint(0, max_steps)):
        heads = []
        for layer, head in topo.head_keys():
            heads.append(
                HeadStat(
                    layer=layer,
                    head=head,
                    mean=q9(rng.uniform(-1, 1)),
                    variance=q9(rng.uniform(0, 2)),
                    skewness=q9(rng.uniform(-2, 2)),
                    kurtosis=q9(rng.uniform(0, 5)),
                )
            )
        layers = []
        for layer in range(topo.layers):
            acts = [
                0.0 if rng.random() < 0.3 else q9(rng.uniform(0, 1.5))
                for _ in range(topo.neurons_per_layer)
            ]
            order = sorted(range(len(acts)), key=lambda i: (-acts[i], i))
            layers.append(
                LayerActivations(
                    layer=layer,
                    activated=tuple((i, a) for i, a in enumerate(acts) if a > floor),
                    topk=tuple(order[: min(k_max, len(acts))]),
                )
            )
        steps.append(
            StepRecord(
                t=t,
                entropy=q9(rng.uniform(0, 3)),
                avg_likelihood=q9(rng.random()),
                heads=tuple(heads),
                layers=tuple(layers),
            )
        )
    return GenerationTrace(
        prompt_id=prompt_id,
        prompt_text="fixture prompt",
        output_text="fixture output",
        topology=topo,
        recording_floor=floor,
        steps=tuple(steps),
    )


def random_corpus(rng: random.Random, size: int, topology: Topology | None = None):
    topo = topology or random_topology(rng)
    return [random_trace(rng, topo, prompt_id=f"p{i}") for i in range(size)]


@pytest.fixture(scope="session")
def refmodel():
    from lecov.refmodel import RefModel, RefModelConfig

    return RefModel(RefModelConfig(max_steps=8))
