"""Protocol loop: serve evaluation requests over stdin/stdout, one per line.

Emits the handshake on start, then answers each request with a result carrying
the same request_id. Schema violations become status "invalid", training
failures "train_failed"; the process never writes anything but protocol lines
to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import torch

from .dataset import TASKS, make_dataset, split
from .genome_schema import InvalidGenome, parse_genome
from .training import TrainJob, TrainingDiverged, train_and_validate

PROTOCOL_VERSION = 1

log = logging.getLogger(__name__)


def handle_request(message: dict, args, dataset) -> dict:
    request_id = int(message["request_id"])
    try:
        genome = parse_genome(message.get("genome"))
        budget = message.get("budget") or {}
        job = TrainJob(
            genome=genome,
            lr_low=float(message["lr_low"]),
            lr_high=float(message["lr_high"]),
            max_epochs=int(budget.get("max_epochs", args.max_epochs)),
            patience=int(budget.get("patience", args.patience)),
            task=args.task,
            seed=args.seed,
            batch_size=args.batch_size,
            dataset=dataset,
        )
        outcome = train_and_validate(job)
    except InvalidGenome as exc:
        log.warning("request %d rejected: %s", request_id, exc)
        return {"type": "result", "request_id": request_id, "status": "invalid"}
    except TrainingDiverged as exc:
        log.warning("request %d failed to train: %s", request_id, exc)
        return {"type": "result", "request_id": request_id, "status": "train_failed"}
    return {
        "type": "result",
        "request_id": request_id,
        "status": "ok",
        "val_loss": outcome["val_loss"],
        "train_loss": outcome["train_loss"],
        "chosen_lr": outcome["chosen_lr"],
        "wall_seconds": outcome["wall_seconds"],
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chimera-trainer", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="base seed for data and weight streams")
    parser.add_argument("--device", default="cpu", choices=["cpu"], help="compute device")
    parser.add_argument("--task", default="classification", choices=list(TASKS))
    parser.add_argument("--dataset", default="synthetic-shapes", choices=["synthetic-shapes"])
    parser.add_argument("--dataset-size", type=int, default=50, help="number of synthetic images")
    parser.add_argument("--image-size", type=int, default=16)
    parser.add_argument("--batch-size", type=int, default=10)
    parser.add_argument("--max-epochs", type=int, default=8, help="default budget when a request has none")
    parser.add_argument("--patience", type=int, default=3)
    parser.add_argument("--threads", type=int, default=1, help="torch CPU threads (1 keeps results reproducible)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="trainer: %(message)s")
    torch.set_num_threads(args.threads)

    x, y = make_dataset(args.task, args.dataset_size, args.image_size, seed=args.seed)
    dataset = split(x, y)

    out = sys.stdout
    print(json.dumps({"type": "hello", "protocol_version": PROTOCOL_VERSION}), file=out, flush=True)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            message = json.loads(line)
        except json.JSONDecodeError:
            log.warning("dropping undecodable request line")
            continue
        if message.get("type") != "eval" or "request_id" not in message:
            log.warning("dropping non-eval message: %r", message.get("type"))
            continue
        print(json.dumps(handle_request(message, args, dataset)), file=out, flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
