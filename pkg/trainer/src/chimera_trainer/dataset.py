"""Procedurally generated shape images, so tests and demos need no downloads.

Classification: squares vs circles at random positions and sizes.
Regression: a circle drawn at a vertical offset; the target is that offset,
scaled to [-1, 1] (trained with Huber loss, matching small-tolerance
regression tasks).
"""

from __future__ import annotations

import numpy as np
import torch

TASKS = ("classification", "regression")


def _blank(size: int) -> np.ndarray:
    return np.zeros((size, size), dtype=np.float32)


def _draw_square(image: np.ndarray, cy: int, cx: int, half: int) -> None:
    size = image.shape[0]
    image[max(0, cy - half) : min(size, cy + half + 1), max(0, cx - half) : min(size, cx + half + 1)] = 1.0


def _draw_circle(image: np.ndarray, cy: float, cx: float, radius: float) -> None:
    size = image.shape[0]
    ys, xs = np.mgrid[0:size, 0:size]
    image[(ys - cy) ** 2 + (xs - cx) ** 2 <= radius**2] = 1.0


def make_dataset(task: str, count: int, size: int, seed: int):
    """Images (count, 1, size, size) and targets for the requested task."""
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}, got {task!r}")
    rng = np.random.default_rng(seed)
    images = np.zeros((count, 1, size, size), dtype=np.float32)
    targets = np.zeros(count, dtype=np.int64 if task == "classification" else np.float32)
    margin = size // 4
    for i in range(count):
        image = _blank(size)
        if task == "classification":
            label = int(rng.integers(0, 2))
            cy, cx = rng.integers(margin, size - margin, size=2)
            extent = int(rng.integers(2, margin + 1))
            if label == 0:
                _draw_square(image, int(cy), int(cx), extent)
            else:
                _draw_circle(image, float(cy), float(cx), float(extent))
            targets[i] = label
        else:
            offset = float(rng.uniform(-1.0, 1.0))
            cy = size / 2 + offset * margin
            _draw_circle(image, cy, size / 2, size / 5)
            targets[i] = offset
        image += rng.normal(0.0, 0.05, size=image.shape).astype(np.float32)
        images[i, 0] = image
    x = torch.from_numpy(images)
    y = torch.from_numpy(targets)
    if task == "regression":
        y = y.unsqueeze(1)
    return x, y


def split(x: torch.Tensor, y: torch.Tensor, val_fraction: float = 0.2):
    cut = max(1, int(len(x) * (1.0 - val_fraction)))
    return (x[:cut], y[:cut]), (x[cut:], y[cut:])
