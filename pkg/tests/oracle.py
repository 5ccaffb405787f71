"""Brute-force reference simulator used as an independent oracle in tests.

Instead of the closed-form output-size formula, window placements are
discovered by sliding over an actually padded array until the kernel no longer
fits, and pooled values are computed per window. Conv content is irrelevant to
the search, so conv layers propagate zero-filled tensors of the discovered
shape with the genome's channel width.
"""

from __future__ import annotations

import numpy as np

from chimera.genome import Genome, LayerKind, LayerSpec


class OracleShapeFailure(Exception):
    def __init__(self, layer_index: int):
        self.layer_index = layer_index
        super().__init__(f"no valid window placement at layer {layer_index}")


def _window_starts(length: int, kernel: int, stride: int) -> list[int]:
    starts = []
    top = 0
    while top + kernel <= length:
        starts.append(top)
        top += stride
    return starts


def _pad(array: np.ndarray, padding: tuple[int, int], value: float) -> np.ndarray:
    ph, pw = padding
    return np.pad(array, ((0, 0), (ph, ph), (pw, pw)), constant_values=value)


def apply_pool(array: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Max or average pooling by explicit window scans.

    Max pooling pads with -inf (padding never wins); average pooling pads with
    zeros that count toward the window size.
    """
    if layer.kind is LayerKind.MAX_POOL:
        padded = _pad(array, layer.padding, -np.inf)
        reduce_fn = np.max
    else:
        padded = _pad(array, layer.padding, 0.0)
        reduce_fn = np.mean
    hs = _window_starts(padded.shape[1], layer.kernel[0], layer.stride[0])
    ws = _window_starts(padded.shape[2], layer.kernel[1], layer.stride[1])
    if not hs or not ws:
        raise OracleShapeFailure(-1)
    out = np.empty((array.shape[0], len(hs), len(ws)), dtype=array.dtype)
    for i, top in enumerate(hs):
        for j, left in enumerate(ws):
            window = padded[:, top : top + layer.kernel[0], left : left + layer.kernel[1]]
            out[:, i, j] = reduce_fn(window, axis=(1, 2))
    return out


def apply_layer(array: np.ndarray, layer: LayerSpec, channel_width: int) -> np.ndarray:
    if layer.kind is LayerKind.RELU:
        return np.maximum(array, 0.0)
    if layer.is_pool:
        return apply_pool(array, layer)
    padded = _pad(array, layer.padding, 0.0)
    hs = _window_starts(padded.shape[1], layer.kernel[0], layer.stride[0])
    ws = _window_starts(padded.shape[2], layer.kernel[1], layer.stride[1])
    if not hs or not ws:
        raise OracleShapeFailure(-1)
    return np.zeros((channel_width, len(hs), len(ws)), dtype=array.dtype)


def simulate_shapes(genome: Genome) -> tuple[tuple[int, int, int], ...]:
    """Shape trace of a zero-filled tensor pushed through the whole stack.

    Raises OracleShapeFailure carrying the index of the first layer where no
    window placement exists.
    """
    array = np.zeros(genome.input_shape)
    trace = [array.shape]
    for index, layer in enumerate(genome.layers):
        try:
            array = apply_layer(array, layer, genome.channel_width)
        except OracleShapeFailure:
            raise OracleShapeFailure(index) from None
        trace.append(array.shape)
    return tuple(trace)


def run_pipeline(array: np.ndarray, layers) -> np.ndarray:
    """Push real values through pooling/activation layers only."""
    for layer in layers:
        assert layer.kind is not LayerKind.CONV, "value pipeline supports pool/activation layers"
        array = apply_layer(array, layer, channel_width=0)
    return array
