"""Mutation operators and the stochastic samplers that drive neighborhood search.

Exploration moves are built from four primitive step kinds (add / remove /
modify a layer, reseed conv weights). The number of steps per move widens with
a candidate's exhaustion counter so nearly exhausted solutions can jump out of
local minima while fresh ones take small steps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum

from .genome import (
    Genome,
    LayerKind,
    LayerSpec,
    RandomSource,
    SearchBounds,
    census,
)
from .repair import RepairFailed, repair

log = logging.getLogger(__name__)

# Limit of the target conv share when the model is still empty: the sampler
# steers toward five convolutions per pooling layer, and 5/6 is the value the
# census ratio converges to from that mix.
EMPTY_MODEL_CONV_PROBABILITY = 5.0 / 6.0


@dataclass(frozen=True)
class MutationConfig:
    p_add: float = 0.30
    p_remove: float = 0.30
    p_modify: float = 0.30
    p_reseed: float = 0.10
    kernel_range: tuple[int, int] = (1, 7)
    max_retries: int = 16

    def __post_init__(self):
        total = self.p_add + self.p_remove + self.p_modify + self.p_reseed
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"p_add+p_remove+p_modify+p_reseed must sum to 1, got {total}")
        for name in ("p_add", "p_remove", "p_modify", "p_reseed"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        lo, hi = self.kernel_range
        if not (1 <= lo <= hi <= 7):
            raise ValueError(f"kernel_range must lie within [1, 7], got {self.kernel_range}")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")


class MutationKind(Enum):
    ADD_LAYER = "add_layer"
    REMOVE_LAYER = "remove_layer"
    MODIFY_LAYER = "modify_layer"
    RESEED_WEIGHTS = "reseed_weights"


def step_scale(exhaustion: int) -> float:
    """Standard deviation of the step-count draw: cbrt(1 + exhaustion)."""
    return (1.0 + exhaustion) ** (1.0 / 3.0)


def step_count(exhaustion: int, rng: RandomSource) -> int:
    """Mutation steps for one exploration move: max(1, ceil(N(1, step_scale)))."""
    draw = rng.normal(1.0, step_scale(exhaustion))
    return max(1, math.ceil(draw))


def conv_probability(n_pool: int, n_conv: int) -> float:
    """Probability that a newly drawn layer is a convolution: 5*n_p / (5*n_p + n_c).

    Drives the census toward five convolutions per pooling layer; at the empty
    model the 0/0 form is resolved to that target share.
    """
    if n_pool == 0 and n_conv == 0:
        return EMPTY_MODEL_CONV_PROBABILITY
    return 5.0 * n_pool / (5.0 * n_pool + n_conv)


def sample_kind(cfg: MutationConfig, rng: RandomSource) -> MutationKind:
    draw = rng.random()
    if draw < cfg.p_add:
        return MutationKind.ADD_LAYER
    if draw < cfg.p_add + cfg.p_remove:
        return MutationKind.REMOVE_LAYER
    if draw < cfg.p_add + cfg.p_remove + cfg.p_modify:
        return MutationKind.MODIFY_LAYER
    return MutationKind.RESEED_WEIGHTS


def _sample_axis_pair(lo: int, hi: int, rng: RandomSource) -> tuple[int, int]:
    return int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))


def _sample_padding(kernel: tuple[int, int], rng: RandomSource) -> tuple[int, int]:
    return int(rng.integers(0, kernel[0])), int(rng.integers(0, kernel[1]))


def _pool_stride(kernel: tuple[int, int], bounds: SearchBounds) -> tuple[int, int]:
    return kernel if bounds.pool_stride is None else bounds.pool_stride


def sample_layer(pool_conv_census: tuple[int, int], bounds: SearchBounds, rng: RandomSource) -> LayerSpec:
    """Draw one fresh layer.

    ``pool_conv_census`` is (n_pool, n_conv) of the model being extended.
    Kernel axes are uniform over the kernel range, padding uniform in
    [0, kernel-1]; pooling is max or average with equal probability.
    """
    n_pool, n_conv = pool_conv_census
    lo, hi = bounds.kernel_range
    if rng.random() < conv_probability(n_pool, n_conv):
        kernel = _sample_axis_pair(lo, hi, rng)
        return LayerSpec(
            LayerKind.CONV,
            kernel=kernel,
            stride=bounds.conv_stride,
            padding=_sample_padding(kernel, rng),
            weight_seed=int(rng.integers(0, 2**32)),
        )
    kind = LayerKind.MAX_POOL if rng.random() < 0.5 else LayerKind.AVG_POOL
    kernel = _sample_axis_pair(lo, hi, rng)
    return LayerSpec(kind, kernel=kernel, stride=_pool_stride(kernel, bounds), padding=_sample_padding(kernel, rng))


def _apply_add(layers: list[LayerSpec], bounds: SearchBounds, rng: RandomSource) -> None:
    position = int(rng.integers(0, len(layers) + 1))
    n_conv, n_pool, _ = census(layers)
    layers.insert(position, sample_layer((n_pool, n_conv), bounds, rng))


def _apply_remove(layers: list[LayerSpec], rng: RandomSource) -> None:
    if len(layers) <= 1:
        return  # a genome never shrinks below one layer
    del layers[int(rng.integers(0, len(layers)))]


def _apply_modify(layers: list[LayerSpec], bounds: SearchBounds, rng: RandomSource) -> None:
    candidates = [i for i, layer in enumerate(layers) if layer.kind is not LayerKind.RELU]
    if not candidates:
        return
    index = candidates[int(rng.integers(0, len(candidates)))]
    layer = layers[index]
    lo, hi = bounds.kernel_range
    kernel = _sample_axis_pair(lo, hi, rng)
    padding = _sample_padding(kernel, rng)
    if layer.kind is LayerKind.CONV:
        layers[index] = LayerSpec(
            LayerKind.CONV, kernel=kernel, stride=bounds.conv_stride, padding=padding, weight_seed=layer.weight_seed
        )
    else:
        kind = LayerKind.MAX_POOL if rng.random() < 0.5 else LayerKind.AVG_POOL
        layers[index] = LayerSpec(kind, kernel=kernel, stride=_pool_stride(kernel, bounds), padding=padding)


def _apply_reseed(layers: list[LayerSpec], rng: RandomSource) -> None:
    conv_indices = [i for i, layer in enumerate(layers) if layer.kind is LayerKind.CONV]
    while True:  # uniform non-empty subset of conv layers
        mask = rng.integers(0, 2, size=len(conv_indices))
        if mask.any():
            break
    for picked, index in zip(mask, conv_indices):
        if picked:
            layers[index] = replace(layers[index], weight_seed=int(rng.integers(0, 2**32)))


def mutate(
    parent: Genome,
    exhaustion: int,
    cfg: MutationConfig,
    bounds: SearchBounds,
    rng: RandomSource,
) -> Genome:
    """Copy ``parent`` and apply a drawn number of mutation steps.

    The result is repaired and shape-valid. Attempts whose repaired form is
    invalid (or exceeds max_layers) are retried; after max_retries the parent
    is returned untouched apart from an extended lineage id.
    """
    lineage = f"{parent.lineage_id}.{int(rng.integers(0, 2**16)):04x}"
    for _ in range(cfg.max_retries):
        steps = step_count(exhaustion, rng)
        layers = list(parent.layers)
        for _ in range(steps):
            kind = sample_kind(cfg, rng)
            if kind is MutationKind.RESEED_WEIGHTS and not any(
                layer.kind is LayerKind.CONV for layer in layers
            ):
                kind = MutationKind.MODIFY_LAYER  # nothing to reseed
            if kind is MutationKind.ADD_LAYER:
                _apply_add(layers, bounds, rng)
            elif kind is MutationKind.REMOVE_LAYER:
                _apply_remove(layers, rng)
            elif kind is MutationKind.MODIFY_LAYER:
                _apply_modify(layers, bounds, rng)
            else:
                _apply_reseed(layers, rng)
        try:
            repaired = repair(replace(parent, layers=tuple(layers), lineage_id=lineage))
        except RepairFailed:
            continue
        if len(repaired.layers) > bounds.max_layers:
            continue
        return repaired
    log.warning("mutation fallback: returning parent copy (lineage %s)", lineage)
    return replace(parent, lineage_id=lineage)
