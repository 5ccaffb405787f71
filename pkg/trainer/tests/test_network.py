import numpy as np
import pytest
import torch

from chimera_trainer import InvalidGenome, build_network, parse_genome
from chimera_trainer.network import feature_shapes

from chimera.genome import SearchBounds, genome_to_record, infer_shapes, random_genome


BOUNDS = SearchBounds(input_shape=(1, 16, 16), output_arity=2, channel_width=8, max_layers=5)


def test_probe_shapes_match_shape_inference_oracle():
    rng = np.random.default_rng(10)
    for _ in range(100):
        genome = random_genome(BOUNDS, rng)
        parsed = parse_genome(genome_to_record(genome))
        assert feature_shapes(parsed) == list(infer_shapes(genome)[1:])


def test_head_maps_to_output_arity():
    rng = np.random.default_rng(11)
    genome = random_genome(BOUNDS, rng)
    network = build_network(parse_genome(genome_to_record(genome)))
    out = network(torch.zeros(3, *BOUNDS.input_shape))
    assert tuple(out.shape) == (3, BOUNDS.output_arity)


def test_weight_seed_reproducibility():
    rng = np.random.default_rng(12)
    genome = random_genome(BOUNDS, rng)
    parsed = parse_genome(genome_to_record(genome))
    first = build_network(parsed, base_seed=7)
    second = build_network(parsed, base_seed=7)
    for a, b in zip(first.state_dict().values(), second.state_dict().values()):
        assert torch.equal(a, b)


def test_weight_seed_changes_weights_not_architecture():
    rng = np.random.default_rng(13)
    while True:
        genome = random_genome(BOUNDS, rng)
        record = genome_to_record(genome)
        conv_indices = [i for i, l in enumerate(record["layers"]) if l["kind"] == "conv"]
        if conv_indices:
            break
    reseeded = genome_to_record(genome)
    reseeded["layers"][conv_indices[0]]["weight_seed"] += 1

    first = build_network(parse_genome(record), base_seed=7)
    second = build_network(parse_genome(reseeded), base_seed=7)
    assert [tuple(p.shape) for p in first.parameters()] == [tuple(p.shape) for p in second.parameters()]
    assert any(
        not torch.equal(a, b) for a, b in zip(first.state_dict().values(), second.state_dict().values())
    )


def test_collapsing_stack_rejected():
    record = {
        "version": 1,
        "input_shape": [1, 7, 7],
        "layers": [
            {"kind": "maxpool", "kernel": [7, 7], "stride": [7, 7], "padding": [0, 0]},
            {"kind": "maxpool", "kernel": [2, 2], "stride": [2, 2], "padding": [0, 0]},
        ],
        "output_arity": 2,
        "lr_hint": 1e-3,
        "channel_width": 8,
        "lineage_id": "t",
    }
    with pytest.raises(InvalidGenome):
        build_network(parse_genome(record))


def test_large_pool_padding_supported():
    # padding beyond kernel//2 is out of reach for torch pooling layers directly
    record = {
        "version": 1,
        "input_shape": [1, 9, 9],
        "layers": [{"kind": "maxpool", "kernel": [3, 3], "stride": [3, 3], "padding": [2, 2]}],
        "output_arity": 2,
        "lr_hint": 1e-3,
        "channel_width": 8,
        "lineage_id": "t",
    }
    parsed = parse_genome(record)
    assert feature_shapes(parsed)[0] == (1, 4, 4)  # (9 + 4 - 3) // 3 + 1

    from chimera.genome import Genome, max_pool

    oracle_genome = Genome(
        input_shape=(1, 9, 9),
        layers=(max_pool(kernel=(3, 3), padding=(2, 2)),),
        output_arity=2,
        lr_hint=1e-3,
        lineage_id="t",
        channel_width=8,
    )
    assert feature_shapes(parsed) == list(infer_shapes(oracle_genome)[1:])
