"""Structural congruence rules applied to every genome before evaluation.

Three rewrite rules run in order per pass, looped to a fixpoint:

  R1  insert a ReLU between adjacent convolutions
  R2  merge adjacent same-kind pooling pairs into one composed window
  R3  move pooling in front of an activation that precedes it

R2 composes receptive fields: k_eff = k1 + (k2-1)*s1 and s_eff = s1*s2 per
axis, keeping the first layer's padding. Pairs whose composed kernel would
exceed the hard kernel bound stay unmerged and are exempt from the congruence
predicate. R3 is value-preserving because max/avg pooling commute with a
monotone activation on their inputs.
"""

from __future__ import annotations

from dataclasses import replace

from .genome import KERNEL_MAX, Genome, LayerKind, LayerSpec, ShapeError, infer_shapes

MAX_PASSES = 32


class RepairFailed(RuntimeError):
    """Repair could not produce a congruent, shape-valid genome; mutation is void."""


def compose_pools(first: LayerSpec, second: LayerSpec) -> LayerSpec | None:
    """Single pooling layer equivalent to applying ``first`` then ``second``.

    Returns None when the layers differ in kind or the composed kernel would
    break the hard kernel bound on either axis.
    """
    if first.kind is not second.kind or not first.is_pool:
        return None
    kernel = []
    stride = []
    for axis in (0, 1):
        k_eff = first.kernel[axis] + (second.kernel[axis] - 1) * first.stride[axis]
        if k_eff > KERNEL_MAX:
            return None
        kernel.append(k_eff)
        stride.append(first.stride[axis] * second.stride[axis])
    return LayerSpec(first.kind, tuple(kernel), tuple(stride), first.padding)


def is_congruent(genome: Genome) -> bool:
    """True iff no conv-conv adjacency, no mergeable same-kind pooling pair,
    and no activation immediately followed by a pooling layer."""
    for a, b in zip(genome.layers, genome.layers[1:]):
        if a.kind is LayerKind.CONV and b.kind is LayerKind.CONV:
            return False
        if a.is_pool and compose_pools(a, b) is not None:
            return False
        if a.kind is LayerKind.RELU and b.is_pool:
            return False
    return True


def _insert_activations(layers: list[LayerSpec]) -> tuple[list[LayerSpec], bool]:
    out: list[LayerSpec] = []
    changed = False
    for layer in layers:
        if out and out[-1].kind is LayerKind.CONV and layer.kind is LayerKind.CONV:
            out.append(LayerSpec(LayerKind.RELU))
            changed = True
        out.append(layer)
    return out, changed


def _merge_pools(layers: list[LayerSpec]) -> tuple[list[LayerSpec], bool]:
    out: list[LayerSpec] = []
    changed = False
    i = 0
    while i < len(layers):
        if i + 1 < len(layers):
            merged = compose_pools(layers[i], layers[i + 1])
            if merged is not None:
                out.append(merged)
                changed = True
                i += 2
                continue
        out.append(layers[i])
        i += 1
    return out, changed


def _swap_activation_pool(layers: list[LayerSpec]) -> tuple[list[LayerSpec], bool]:
    out = list(layers)
    changed = False
    i = 0
    while i + 1 < len(out):
        if out[i].kind is LayerKind.RELU and out[i + 1].is_pool:
            out[i], out[i + 1] = out[i + 1], out[i]
            changed = True
            i += 2
        else:
            i += 1
    return out, changed


def repair(genome: Genome) -> Genome:
    """Rewrite ``genome`` to a congruent, shape-valid equivalent.

    Raises RepairFailed if no fixpoint is reached within MAX_PASSES or the
    repaired stack fails shape inference; callers treat that as a void
    mutation.
    """
    layers = list(genome.layers)
    for _ in range(MAX_PASSES):
        layers, c1 = _insert_activations(layers)
        layers, c2 = _merge_pools(layers)
        layers, c3 = _swap_activation_pool(layers)
        if not (c1 or c2 or c3):
            break
    else:
        raise RepairFailed(f"no fixpoint within {MAX_PASSES} passes (lineage {genome.lineage_id})")
    repaired = replace(genome, layers=tuple(layers))
    if not is_congruent(repaired):
        raise RepairFailed(f"fixpoint is not congruent (lineage {genome.lineage_id})")
    try:
        infer_shapes(repaired)
    except ShapeError as exc:
        raise RepairFailed(f"repaired genome is shape-invalid: {exc}") from exc
    return repaired
