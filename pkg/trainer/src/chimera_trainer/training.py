"""Train a genome's network to convergence and report its validation loss.

Convergence means early stopping: training ends when the validation loss has
not improved for `patience` epochs or the epoch budget runs out, and the best
validation loss seen is reported. Everything is seeded, so a repeated request
reproduces the same loss on CPU.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field

import torch
from torch import nn

from .dataset import make_dataset, split
from .genome_schema import GenomeRecord
from .lr_finder import lr_range_test
from .network import build_network

HUBER_DELTA = 0.1


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; reported as status 'train_failed'."""


@dataclass
class TrainJob:
    genome: GenomeRecord
    lr_low: float
    lr_high: float
    max_epochs: int = 8
    patience: int = 3
    task: str = "classification"
    seed: int = 0
    batch_size: int = 10
    dataset: tuple | None = field(default=None, repr=False)  # ((train_x, train_y), (val_x, val_y))
    dataset_size: int = 50
    image_size: int = 16


def loss_function(task: str) -> nn.Module:
    if task == "regression":
        return nn.HuberLoss(delta=HUBER_DELTA)
    return nn.CrossEntropyLoss()


def _job_seed(job: TrainJob) -> int:
    blob = f"{job.seed}:{job.genome.lineage_id}:{[l.weight_seed for l in job.genome.layers]}"
    return int.from_bytes(hashlib.sha256(blob.encode()).digest()[:6], "big")


def _batches(x: torch.Tensor, y: torch.Tensor, batch_size: int, generator: torch.Generator):
    order = torch.randperm(len(x), generator=generator)
    for start in range(0, len(x), batch_size):
        picked = order[start : start + batch_size]
        yield x[picked], y[picked]


def _evaluate(model: nn.Module, loss_fn, x: torch.Tensor, y: torch.Tensor) -> float:
    model.eval()
    with torch.no_grad():
        return float(loss_fn(model(x), y))


def train_and_validate(job: TrainJob) -> dict:
    """Returns val_loss / train_loss / chosen_lr / wall_seconds for the job."""
    started = time.monotonic()
    torch.manual_seed(_job_seed(job))

    if job.dataset is None:
        x, y = make_dataset(job.task, job.dataset_size, job.image_size, seed=job.seed)
        (train_x, train_y), (val_x, val_y) = split(x, y)
    else:
        (train_x, train_y), (val_x, val_y) = job.dataset

    model = build_network(job.genome, base_seed=job.seed)
    loss_fn = loss_function(job.task)

    sweep_generator = torch.Generator().manual_seed(_job_seed(job) ^ 0xA5A5)
    sweep_batches = list(_batches(train_x, train_y, job.batch_size, sweep_generator))
    chosen_lr = lr_range_test(model, loss_fn, sweep_batches, job.lr_low, job.lr_high)

    best_val = _evaluate(model, loss_fn, val_x, val_y)  # epoch-0 baseline
    if not math.isfinite(best_val):
        raise TrainingDiverged("validation loss non-finite before training")
    train_loss = _evaluate(model, loss_fn, train_x, train_y)

    optimizer = torch.optim.Adam(model.parameters(), lr=chosen_lr)
    epoch_generator = torch.Generator().manual_seed(_job_seed(job) ^ 0x5A5A)
    stale_epochs = 0
    for _ in range(job.max_epochs):
        model.train()
        epoch_train = 0.0
        batch_count = 0
        for inputs, targets in _batches(train_x, train_y, job.batch_size, epoch_generator):
            optimizer.zero_grad()
            loss = loss_fn(model(inputs), targets)
            raw = float(loss.detach())
            if not math.isfinite(raw):
                raise TrainingDiverged("training loss non-finite")
            loss.backward()
            optimizer.step()
            epoch_train += raw
            batch_count += 1
        train_loss = epoch_train / max(batch_count, 1)
        val_loss = _evaluate(model, loss_fn, val_x, val_y)
        if not math.isfinite(val_loss):
            raise TrainingDiverged("validation loss non-finite")
        if val_loss < best_val:
            best_val = val_loss
            stale_epochs = 0
        else:
            stale_epochs += 1
            if stale_epochs >= job.patience:
                break

    return {
        "val_loss": best_val,
        "train_loss": train_loss,
        "chosen_lr": chosen_lr,
        "wall_seconds": time.monotonic() - started,
    }
