"""Secondary acceptance: the trainer serves a real engine search over the wire.

Run with `pytest tests/test_acceptance.py -v -s`.
"""

import functools
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from chimera.engine import ArchitectureSpace, EngineConfig, run
from chimera.evaluator import EvalBudget, ExternalProcessEvaluator
from chimera.genome import SearchBounds, genome_to_record, infer_shapes, random_genome
from chimera.mutation import MutationConfig
from chimera.telemetry import Telemetry

from chimera_trainer import parse_genome
from chimera_trainer.network import feature_shapes

TRAINER_COMMAND = [
    sys.executable,
    "-m",
    "chimera_trainer",
    "--seed",
    "5",
    "--dataset-size",
    "50",
    "--image-size",
    "16",
]


def criterion(name, budget_seconds):
    def wrap(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            started = time.monotonic()
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[acceptance] {name}: FAIL")
                raise
            elapsed = time.monotonic() - started
            print(f"[acceptance] {name}: PASS ({elapsed:.1f}s, budget {budget_seconds}s)")
            assert elapsed < budget_seconds

        return inner

    return wrap


@criterion("trainer-protocol-conformance", 300)
def test_protocol_conformance_end_to_end():
    bounds = SearchBounds(
        input_shape=(1, 16, 16), output_arity=2, channel_width=8, max_layers=5, kernel_range=(1, 5)
    )
    config = EngineConfig(
        population_size=2,
        max_iter=2,
        bounds=bounds,
        mutation=MutationConfig(kernel_range=(1, 5)),
        rng_seed=90,
    )
    telemetry = Telemetry()
    with ExternalProcessEvaluator(
        TRAINER_COMMAND, timeout=120.0, budget=EvalBudget(max_epochs=2, patience=2)
    ) as evaluator:
        models = run(
            config, evaluator, space=ArchitectureSpace(bounds, config.mutation), telemetry=telemetry
        )

    assert models and all(np.isfinite(m.loss) for m in models)
    # zero protocol errors: every single evaluation came back ok
    assert telemetry.eval_records, "no evaluations recorded"
    assert all(record["status"] == "ok" for record in telemetry.eval_records)
    # the decade rule: every reported learning rate honors the transmitted bounds
    for record in telemetry.eval_records:
        assert record["lr_low"] <= record["chosen_lr"] <= record["lr_high"]
        assert record["lr_low"] == record["lr_high"] / 100.0


@criterion("trainer-shape-agreement", 300)
def test_build_network_matches_shape_inference():
    rng = np.random.default_rng(900)
    bounds = SearchBounds(input_shape=(1, 16, 16), output_arity=2, channel_width=8, max_layers=5)
    for _ in range(100):
        genome = random_genome(bounds, rng)
        parsed = parse_genome(genome_to_record(genome))
        assert feature_shapes(parsed) == list(infer_shapes(genome)[1:])


@criterion("trainer-invalid-genome-over-wire", 120)
def test_invalid_genome_rejected_over_the_wire():
    process = subprocess.Popen(
        TRAINER_COMMAND,
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        text=True,
        bufsize=1,
    )
    try:
        hello = json.loads(process.stdout.readline())
        assert hello == {"type": "hello", "protocol_version": 1}
        request = {
            "type": "eval",
            "request_id": 41,
            "genome": {"input_shape": [1, 16, 16], "layers": [{"kind": "attention"}]},
            "lr_low": 1e-4,
            "lr_high": 1e-2,
        }
        process.stdin.write(json.dumps(request) + "\n")
        process.stdin.flush()
        response = json.loads(process.stdout.readline())
        assert response["request_id"] == 41
        assert response["status"] == "invalid"
    finally:
        process.kill()
        process.wait()


@criterion("trainer-determinism-over-wire", 300)
def test_same_request_twice_is_identical():
    genome = random_genome(
        SearchBounds(input_shape=(1, 16, 16), output_arity=2, channel_width=8, max_layers=3),
        np.random.default_rng(17),
    )
    record = genome_to_record(genome)
    process = subprocess.Popen(
        TRAINER_COMMAND + ["--max-epochs", "2", "--patience", "2"],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        text=True,
        bufsize=1,
    )
    try:
        json.loads(process.stdout.readline())
        losses = []
        for request_id in (1, 2):
            request = {
                "type": "eval",
                "request_id": request_id,
                "genome": record,
                "lr_low": 1e-4,
                "lr_high": 1e-2,
            }
            process.stdin.write(json.dumps(request) + "\n")
            process.stdin.flush()
            response = json.loads(process.stdout.readline())
            assert response["status"] == "ok"
            losses.append(response["val_loss"])
        assert losses[0] == pytest.approx(losses[1], abs=1e-6)
    finally:
        process.kill()
        process.wait()
