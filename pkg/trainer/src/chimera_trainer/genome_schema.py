"""Parsing and validation of serialized genome records (schema version 1).

The trainer is a standalone process: it validates incoming records against the
documented schema instead of trusting the sender.
"""

from __future__ import annotations

from dataclasses import dataclass

RECORD_VERSION = 1
KNOWN_KINDS = ("conv", "maxpool", "avgpool", "relu")
KERNEL_MIN, KERNEL_MAX = 1, 7


class InvalidGenome(ValueError):
    """Record fails schema validation; reported as status 'invalid'."""


@dataclass(frozen=True)
class LayerRecord:
    kind: str
    kernel: tuple[int, int] | None = None
    stride: tuple[int, int] | None = None
    padding: tuple[int, int] | None = None
    weight_seed: int | None = None


@dataclass(frozen=True)
class GenomeRecord:
    input_shape: tuple[int, int, int]
    layers: tuple[LayerRecord, ...]
    output_arity: int
    lr_hint: float
    channel_width: int
    lineage_id: str


def _int_pair(entry: dict, field: str, index: int, minimum: int, maximum: int | None = None) -> tuple[int, int]:
    value = entry.get(field)
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise InvalidGenome(f"layer {index}: {field} must be a pair")
    try:
        pair = (int(value[0]), int(value[1]))
    except (TypeError, ValueError):
        raise InvalidGenome(f"layer {index}: {field} must hold integers") from None
    for axis_value in pair:
        if axis_value < minimum or (maximum is not None and axis_value > maximum):
            raise InvalidGenome(f"layer {index}: {field}={pair} out of range")
    return pair


def parse_genome(record) -> GenomeRecord:
    if not isinstance(record, dict):
        raise InvalidGenome("genome must be an object")
    if record.get("version", RECORD_VERSION) != RECORD_VERSION:
        raise InvalidGenome(f"unsupported genome version {record.get('version')!r}")
    for field in ("input_shape", "layers", "output_arity", "lr_hint", "channel_width"):
        if field not in record:
            raise InvalidGenome(f"genome missing field {field!r}")

    shape = record["input_shape"]
    if not isinstance(shape, (list, tuple)) or len(shape) != 3 or any(int(v) < 1 for v in shape):
        raise InvalidGenome(f"input_shape must be three positive integers, got {shape!r}")

    raw_layers = record["layers"]
    if not isinstance(raw_layers, list) or not raw_layers:
        raise InvalidGenome("layers must be a non-empty list")

    layers = []
    for index, entry in enumerate(raw_layers):
        if not isinstance(entry, dict):
            raise InvalidGenome(f"layer {index} must be an object")
        kind = entry.get("kind")
        if kind not in KNOWN_KINDS:
            raise InvalidGenome(f"layer {index}: unknown kind {kind!r}")
        if kind == "relu":
            layers.append(LayerRecord(kind))
            continue
        kernel = _int_pair(entry, "kernel", index, KERNEL_MIN, KERNEL_MAX)
        stride = _int_pair(entry, "stride", index, 1)
        padding = _int_pair(entry, "padding", index, 0)
        for axis in (0, 1):
            if padding[axis] > kernel[axis] - 1:
                raise InvalidGenome(f"layer {index}: padding {padding} exceeds kernel {kernel} minus one")
        weight_seed = None
        if kind == "conv":
            weight_seed = entry.get("weight_seed")
            if not isinstance(weight_seed, int) or weight_seed < 0:
                raise InvalidGenome(f"layer {index}: conv needs a non-negative integer weight_seed")
        layers.append(LayerRecord(kind, kernel, stride, padding, weight_seed))

    output_arity = int(record["output_arity"])
    channel_width = int(record["channel_width"])
    lr_hint = float(record["lr_hint"])
    if output_arity < 1 or channel_width < 1 or not lr_hint > 0:
        raise InvalidGenome("output_arity and channel_width must be >= 1 and lr_hint positive")
    return GenomeRecord(
        input_shape=tuple(int(v) for v in shape),
        layers=tuple(layers),
        output_arity=output_arity,
        lr_hint=lr_hint,
        channel_width=channel_width,
        lineage_id=str(record.get("lineage_id", "")),
    )
