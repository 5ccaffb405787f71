"""One-pass learning-rate range test.

The learning rate sweeps geometrically from the lower to the upper bound over
one pass through the training batches while an exponentially smoothed loss is
tracked. The chosen rate is one decade below the point where the smoothed loss
diverges (4x its best value, or turns non-finite), clamped into the bounds.
Without an observed divergence the geometric mean of the bounds is returned.
"""

from __future__ import annotations

import copy
import logging
import math

import torch

log = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 4.0
SMOOTHING = 0.9
MIN_STEPS = 12


def lr_schedule(lr_low: float, lr_high: float, steps: int) -> list[float]:
    if steps == 1:
        return [math.sqrt(lr_low * lr_high)]
    ratio = (lr_high / lr_low) ** (1.0 / (steps - 1))
    return [lr_low * ratio**i for i in range(steps)]


def lr_range_test(model, loss_fn, batches, lr_low: float, lr_high: float) -> float:
    """Pick a training rate within [lr_low, lr_high]; the model is not modified."""
    if not lr_low < lr_high:
        raise ValueError(f"lr_low must be below lr_high, got [{lr_low}, {lr_high}]")
    probe = copy.deepcopy(model)
    probe.train()
    batches = list(batches)
    steps = max(len(batches), MIN_STEPS)
    rates = lr_schedule(lr_low, lr_high, steps)
    optimizer = torch.optim.Adam(probe.parameters(), lr=rates[0])

    smoothed = None
    best = math.inf
    divergence_lr = None
    for step, lr in enumerate(rates):
        inputs, targets = batches[step % len(batches)]
        for group in optimizer.param_groups:
            group["lr"] = lr
        optimizer.zero_grad()
        loss = loss_fn(probe(inputs), targets)
        raw = float(loss.detach())
        if not math.isfinite(raw):
            divergence_lr = lr
            break
        smoothed = raw if smoothed is None else SMOOTHING * smoothed + (1.0 - SMOOTHING) * raw
        best = min(best, smoothed)
        if smoothed > DIVERGENCE_FACTOR * best:
            divergence_lr = lr
            break
        loss.backward()
        optimizer.step()

    if divergence_lr is None:
        fallback = math.sqrt(lr_low * lr_high)
        log.info("no divergence observed in [%g, %g]; falling back to %g", lr_low, lr_high, fallback)
        return fallback
    return min(max(divergence_lr / 10.0, lr_low), lr_high)
