"""CNN architecture genomes: layer specs, shape inference, random generation.

A genome is an immutable, ordered stack of convolution / pooling / activation
layers plus the metadata needed to evaluate it (input shape, output arity,
learning-rate hint). Channel counts are not part of the search space: every
convolution emits ``channel_width`` channels and the classifier head (flatten +
dense) is implicit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

RandomSource = np.random.Generator

KERNEL_MIN = 1
KERNEL_MAX = 7
RECORD_VERSION = 1

# Attempts before a generator gives up on producing a shape-valid genome.
GENERATION_RETRIES = 16


class LayerKind(str, Enum):
    CONV = "conv"
    MAX_POOL = "maxpool"
    AVG_POOL = "avgpool"
    RELU = "relu"


POOL_KINDS = (LayerKind.MAX_POOL, LayerKind.AVG_POOL)


class ShapeError(ValueError):
    """A layer would produce a spatial dimension below 1."""

    def __init__(self, layer_index: int, axis: int):
        self.layer_index = layer_index
        self.axis = axis
        super().__init__(f"layer {layer_index} collapses spatial axis {axis} below 1")


class GenerationExhausted(RuntimeError):
    """No shape-valid genome found within the retry budget (bounds too tight)."""


class SchemaError(ValueError):
    """A serialized genome record does not match the documented schema."""


def _check_pair(name: str, value, low: int, high: int | None = None) -> tuple[int, int]:
    if (
        not isinstance(value, (tuple, list))
        or len(value) != 2
        or not all(isinstance(v, (int, np.integer)) for v in value)
    ):
        raise ValueError(f"{name} must be a pair of integers, got {value!r}")
    a, b = int(value[0]), int(value[1])
    for v in (a, b):
        if v < low or (high is not None and v > high):
            bound = f"[{low}, {high}]" if high is not None else f">= {low}"
            raise ValueError(f"{name} entries must be {bound}, got {value!r}")
    return a, b


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a genome.

    Conv and pooling layers carry kernel/stride/padding; activation layers
    carry nothing. ``weight_seed`` (conv only) marks the weight initialization
    stream so the weight-reset mutation can force retraining from new weights.
    """

    kind: LayerKind
    kernel: tuple[int, int] | None = None
    stride: tuple[int, int] | None = None
    padding: tuple[int, int] | None = None
    weight_seed: int | None = None

    def __post_init__(self):
        if self.kind is LayerKind.RELU:
            if self.kernel is not None or self.stride is not None or self.padding is not None:
                raise ValueError("activation layers carry no kernel/stride/padding")
            if self.weight_seed is not None:
                raise ValueError("activation layers carry no weight_seed")
            return
        kernel = _check_pair("kernel", self.kernel, KERNEL_MIN, KERNEL_MAX)
        stride = _check_pair("stride", self.stride, 1)
        padding = _check_pair("padding", self.padding, 0)
        for axis in (0, 1):
            if padding[axis] > kernel[axis] - 1:
                raise ValueError(f"padding {padding} exceeds kernel {kernel} minus one on axis {axis}")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "stride", stride)
        object.__setattr__(self, "padding", padding)
        if self.kind is LayerKind.CONV:
            if self.weight_seed is None or int(self.weight_seed) < 0:
                raise ValueError("conv layers need a non-negative weight_seed")
            object.__setattr__(self, "weight_seed", int(self.weight_seed))
        elif self.weight_seed is not None:
            raise ValueError("only conv layers carry a weight_seed")

    @property
    def is_pool(self) -> bool:
        return self.kind in POOL_KINDS


def conv(kernel=(3, 3), stride=(1, 1), padding=(0, 0), weight_seed=0) -> LayerSpec:
    return LayerSpec(LayerKind.CONV, tuple(kernel), tuple(stride), tuple(padding), weight_seed)


def max_pool(kernel=(2, 2), stride=None, padding=(0, 0)) -> LayerSpec:
    stride = tuple(kernel) if stride is None else tuple(stride)
    return LayerSpec(LayerKind.MAX_POOL, tuple(kernel), stride, tuple(padding))


def avg_pool(kernel=(2, 2), stride=None, padding=(0, 0)) -> LayerSpec:
    stride = tuple(kernel) if stride is None else tuple(stride)
    return LayerSpec(LayerKind.AVG_POOL, tuple(kernel), stride, tuple(padding))


def relu() -> LayerSpec:
    return LayerSpec(LayerKind.RELU)


@dataclass(frozen=True)
class SearchBounds:
    """User-facing limits of the architecture space.

    ``pool_stride=None`` means pooling strides track the kernel
    (non-overlapping windows); conv strides default to (1, 1).
    """

    input_shape: tuple[int, int, int] = (3, 32, 32)
    output_arity: int = 10
    max_layers: int = 12
    kernel_range: tuple[int, int] = (KERNEL_MIN, KERNEL_MAX)
    conv_stride: tuple[int, int] = (1, 1)
    pool_stride: tuple[int, int] | None = None
    channel_width: int = 32
    default_lr: float = 1e-3

    def __post_init__(self):
        c, h, w = self.input_shape
        if min(c, h, w) < 1:
            raise ValueError(f"input_shape must be positive, got {self.input_shape}")
        if self.output_arity < 1:
            raise ValueError("output_arity must be >= 1")
        if self.max_layers < 1:
            raise ValueError("max_layers must be >= 1")
        lo, hi = self.kernel_range
        if not (KERNEL_MIN <= lo <= hi <= KERNEL_MAX):
            raise ValueError(f"kernel_range must lie within [{KERNEL_MIN}, {KERNEL_MAX}], got {self.kernel_range}")
        _check_pair("conv_stride", self.conv_stride, 1)
        if self.pool_stride is not None:
            _check_pair("pool_stride", self.pool_stride, 1)
        if self.channel_width < 1:
            raise ValueError("channel_width must be >= 1")
        if not self.default_lr > 0:
            raise ValueError("default_lr must be positive")


@dataclass(frozen=True)
class Genome:
    """An ordered layer stack plus evaluation metadata; the unit the search mutates."""

    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    output_arity: int
    lr_hint: float
    lineage_id: str
    channel_width: int

    def __post_init__(self):
        if not self.layers:
            raise ValueError("genome needs at least one layer")
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        if min(self.input_shape) < 1:
            raise ValueError(f"input_shape must be positive, got {self.input_shape}")
        if self.output_arity < 1:
            raise ValueError("output_arity must be >= 1")
        if not (np.isfinite(self.lr_hint) and self.lr_hint > 0):
            raise ValueError("lr_hint must be a positive finite real")
        if self.channel_width < 1:
            raise ValueError("channel_width must be >= 1")


ShapeTrace = tuple[tuple[int, int, int], ...]


def infer_shapes(genome: Genome) -> ShapeTrace:
    """Propagate (channels, height, width) through the layer stack.

    Returns one triple per layer boundary, starting at the input shape.
    Raises ShapeError at the first layer whose output would drop below 1
    on either spatial axis.
    """
    c, h, w = genome.input_shape
    trace = [(c, h, w)]
    for index, layer in enumerate(genome.layers):
        if layer.kind is not LayerKind.RELU:
            (kh, kw), (sh, sw), (ph, pw) = layer.kernel, layer.stride, layer.padding
            h = (h + 2 * ph - kh) // sh + 1
            w = (w + 2 * pw - kw) // sw + 1
            if h < 1:
                raise ShapeError(index, 0)
            if w < 1:
                raise ShapeError(index, 1)
            if layer.kind is LayerKind.CONV:
                c = genome.channel_width
        trace.append((c, h, w))
    return tuple(trace)


def layer_census(genome: Genome) -> tuple[int, int, int]:
    """Counts (n_conv, n_pool, n_act); both pooling variants count as pool."""
    return census(genome.layers)


def census(layers) -> tuple[int, int, int]:
    n_conv = n_pool = n_act = 0
    for layer in layers:
        if layer.kind is LayerKind.CONV:
            n_conv += 1
        elif layer.is_pool:
            n_pool += 1
        else:
            n_act += 1
    return n_conv, n_pool, n_act


def random_genome(bounds: SearchBounds, rng: RandomSource) -> Genome:
    """Draw a repaired, shape-valid genome with a uniform layer count.

    Layers are sampled one at a time so the conv/pool mix follows the running
    census ratio. Draws that fail repair, shape inference, or the max_layers
    bound are retried; GenerationExhausted signals bounds too tight for the
    input shape.
    """
    from .mutation import sample_layer
    from .repair import RepairFailed, repair

    lineage = f"g{int(rng.integers(0, 2**32)):08x}"
    for _ in range(GENERATION_RETRIES):
        count = int(rng.integers(1, bounds.max_layers + 1))
        layers: list[LayerSpec] = []
        for _ in range(count):
            n_conv, n_pool, _ = census(layers)
            layers.append(sample_layer((n_pool, n_conv), bounds, rng))
        draft = Genome(
            input_shape=bounds.input_shape,
            layers=tuple(layers),
            output_arity=bounds.output_arity,
            lr_hint=bounds.default_lr,
            lineage_id=lineage,
            channel_width=bounds.channel_width,
        )
        try:
            repaired = repair(draft)
        except RepairFailed:
            continue
        if len(repaired.layers) > bounds.max_layers:
            continue
        return repaired
    raise GenerationExhausted(
        f"no valid genome within {GENERATION_RETRIES} attempts for input {bounds.input_shape}"
    )


def genome_to_record(genome: Genome) -> dict:
    """Serialize to the versioned record used in checkpoints and on the wire."""
    layers = []
    for layer in genome.layers:
        if layer.kind is LayerKind.RELU:
            layers.append({"kind": layer.kind.value})
            continue
        entry = {
            "kind": layer.kind.value,
            "kernel": list(layer.kernel),
            "stride": list(layer.stride),
            "padding": list(layer.padding),
        }
        if layer.kind is LayerKind.CONV:
            entry["weight_seed"] = layer.weight_seed
        layers.append(entry)
    return {
        "version": RECORD_VERSION,
        "input_shape": list(genome.input_shape),
        "layers": layers,
        "output_arity": genome.output_arity,
        "lr_hint": genome.lr_hint,
        "channel_width": genome.channel_width,
        "lineage_id": genome.lineage_id,
    }


def genome_from_record(record: dict) -> Genome:
    """Parse a serialized genome record; SchemaError on any contract violation."""
    if not isinstance(record, dict):
        raise SchemaError(f"genome record must be an object, got {type(record).__name__}")
    version = record.get("version", RECORD_VERSION)
    if version != RECORD_VERSION:
        raise SchemaError(f"unsupported genome record version {version!r}")
    missing = {"input_shape", "layers", "output_arity", "lr_hint", "channel_width", "lineage_id"} - set(record)
    if missing:
        raise SchemaError(f"genome record missing fields: {sorted(missing)}")
    raw_layers = record["layers"]
    if not isinstance(raw_layers, list) or not raw_layers:
        raise SchemaError("layers must be a non-empty list")
    layers = []
    for i, entry in enumerate(raw_layers):
        if not isinstance(entry, dict) or "kind" not in entry:
            raise SchemaError(f"layer {i} must be an object with a 'kind'")
        try:
            kind = LayerKind(entry["kind"])
        except ValueError:
            raise SchemaError(f"layer {i} has unknown kind {entry['kind']!r}") from None
        try:
            if kind is LayerKind.RELU:
                layers.append(LayerSpec(kind))
            else:
                layers.append(
                    LayerSpec(
                        kind,
                        kernel=tuple(entry["kernel"]),
                        stride=tuple(entry["stride"]),
                        padding=tuple(entry["padding"]),
                        weight_seed=entry.get("weight_seed"),
                    )
                )
        except (ValueError, KeyError, TypeError) as exc:
            raise SchemaError(f"layer {i} invalid: {exc}") from exc
    try:
        return Genome(
            input_shape=tuple(record["input_shape"]),
            layers=tuple(layers),
            output_arity=int(record["output_arity"]),
            lr_hint=float(record["lr_hint"]),
            lineage_id=str(record["lineage_id"]),
            channel_width=int(record["channel_width"]),
        )
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"genome record invalid: {exc}") from exc


def genome_fingerprint(genome: Genome) -> str:
    """Content hash over every field except lineage_id; stable across processes."""
    record = genome_to_record(genome)
    del record["lineage_id"]
    del record["version"]
    blob = json.dumps(record, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def with_lr_hint(genome: Genome, lr: float) -> Genome:
    return replace(genome, lr_hint=float(lr))
