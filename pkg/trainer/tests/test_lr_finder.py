import math

import pytest
import torch
from torch import nn

from chimera_trainer import lr_range_test


def quadratic_batches(count=8, batch=8, seed=0):
    generator = torch.Generator().manual_seed(seed)
    batches = []
    for _ in range(count):
        x = torch.randn(batch, 4, generator=generator)
        y = x.sum(dim=1, keepdim=True)
        batches.append((x, y))
    return batches


def test_choice_within_bounds_on_toy_objective():
    model = nn.Linear(4, 1)
    chosen = lr_range_test(model, nn.MSELoss(), quadratic_batches(), 1e-4, 1e-2)
    assert 1e-4 <= chosen <= 1e-2


def test_constant_loss_falls_back_to_geometric_mean():
    class Constant(nn.Module):
        def __init__(self):
            super().__init__()
            self.weight = nn.Parameter(torch.zeros(1))

        def forward(self, x):
            return x.sum(dim=1, keepdim=True) * 0.0 + self.weight * 0.0

    chosen = lr_range_test(Constant(), nn.MSELoss(), quadratic_batches(), 1e-4, 1e-2)
    assert chosen == pytest.approx(math.sqrt(1e-4 * 1e-2))


def test_divergence_picks_a_decade_below():
    # huge learning rates on a steep objective blow the smoothed loss up
    model = nn.Linear(4, 1)
    chosen = lr_range_test(model, nn.MSELoss(), quadratic_batches(), 1e-3, 1e4)
    assert 1e-3 <= chosen <= 1e4
    assert chosen < 1e4  # divergence must trigger before the top of the sweep

    diverged_chosen = lr_range_test(model, nn.MSELoss(), quadratic_batches(), 1e2, 1e6)
    assert diverged_chosen == pytest.approx(1e2)  # clamped to the lower bound


def test_model_left_untouched():
    model = nn.Linear(4, 1)
    before = [p.clone() for p in model.parameters()]
    lr_range_test(model, nn.MSELoss(), quadratic_batches(), 1e-4, 1e-2)
    for old, new in zip(before, model.parameters()):
        assert torch.equal(old, new)


def test_invalid_bounds_rejected():
    with pytest.raises(ValueError):
        lr_range_test(nn.Linear(4, 1), nn.MSELoss(), quadratic_batches(), 1e-2, 1e-2)
