"""Turn a genome record into an executable torch network.

The backbone follows the record layer by layer; a flatten plus one linear
layer maps the final feature map to the requested output arity. Conv weights
are drawn from each layer's weight_seed so rebuilding a genome reproduces its
initialization bit for bit, and a weight-reset mutation really does change the
starting point.
"""

from __future__ import annotations

import hashlib
import json
import math

import torch
from torch import nn

from .genome_schema import GenomeRecord, InvalidGenome, LayerRecord


class PaddedPool(nn.Module):
    """Pooling with explicit pre-padding.

    Torch pooling layers reject padding beyond half the kernel, but genomes
    allow padding up to kernel-1; padding by hand lifts the restriction. Max
    pooling pads with -inf so padding never wins a window; average pooling
    pads with zeros that count toward the window size.
    """

    def __init__(self, layer: LayerRecord):
        super().__init__()
        self.padding = layer.padding
        if layer.kind == "maxpool":
            self.fill = float("-inf")
            self.pool = nn.MaxPool2d(layer.kernel, layer.stride)
        else:
            self.fill = 0.0
            self.pool = nn.AvgPool2d(layer.kernel, layer.stride, count_include_pad=True)

    def forward(self, x):
        ph, pw = self.padding
        if ph or pw:
            x = nn.functional.pad(x, (pw, pw, ph, ph), value=self.fill)
        return self.pool(x)


def _seed_conv(conv: nn.Conv2d, seed: int) -> None:
    generator = torch.Generator().manual_seed(seed)
    fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
    std = math.sqrt(2.0 / fan_in)
    with torch.no_grad():
        conv.weight.normal_(0.0, std, generator=generator)
        conv.bias.zero_()


def head_seed(genome: GenomeRecord, base_seed: int) -> int:
    """Deterministic seed for the classifier head, tied to the architecture."""
    blob = json.dumps(
        {
            "input_shape": list(genome.input_shape),
            "layers": [
                [l.kind, l.kernel, l.stride, l.padding, l.weight_seed] for l in genome.layers
            ],
            "output_arity": genome.output_arity,
            "channel_width": genome.channel_width,
            "base": base_seed,
        },
        sort_keys=True,
    )
    return int.from_bytes(hashlib.sha256(blob.encode()).digest()[:6], "big")


def build_network(genome: GenomeRecord, base_seed: int = 0) -> nn.Module:
    """Backbone + flatten + dense head, with seeded initialization.

    Raises InvalidGenome when the stack collapses the feature map (probed with
    an actual forward pass rather than arithmetic).
    """
    channels = genome.input_shape[0]
    backbone: list[nn.Module] = []
    for layer in genome.layers:
        if layer.kind == "relu":
            backbone.append(nn.ReLU())
        elif layer.kind == "conv":
            conv = nn.Conv2d(channels, genome.channel_width, layer.kernel, layer.stride, layer.padding)
            _seed_conv(conv, layer.weight_seed)
            backbone.append(conv)
            channels = genome.channel_width
        else:
            backbone.append(PaddedPool(layer))
    body = nn.Sequential(*backbone)

    probe = torch.zeros(1, *genome.input_shape)
    try:
        with torch.no_grad():
            features = body(probe)
    except RuntimeError as exc:
        raise InvalidGenome(f"stack collapses the feature map: {exc}") from exc
    if features.numel() < 1 or min(features.shape[2:]) < 1:
        raise InvalidGenome("stack collapses the feature map")

    head = nn.Linear(features[0].numel(), genome.output_arity)
    generator = torch.Generator().manual_seed(head_seed(genome, base_seed))
    bound = 1.0 / math.sqrt(head.in_features)
    with torch.no_grad():
        head.weight.uniform_(-bound, bound, generator=generator)
        head.bias.zero_()
    return nn.Sequential(body, nn.Flatten(), head)


def feature_shapes(genome: GenomeRecord) -> list[tuple[int, int, int]]:
    """Per-layer output shapes observed on a probe batch (for cross-checks)."""
    network = build_network(genome)
    body = network[0]
    shapes = []
    x = torch.zeros(1, *genome.input_shape)
    with torch.no_grad():
        for module in body:
            x = module(x)
            shapes.append(tuple(x.shape[1:]))
    return shapes
