"""Operator surface: launch, resume, and inspect searches from the command line.

Every invocation works against one flat run directory holding a manifest, the
config snapshot, line-delimited telemetry, an iteration CSV, the latest
checkpoint, and the final models. A manifest plus config snapshot is enough to
reproduce the run exactly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import __version__, engine
from .config import (
    ConfigError,
    build_evaluator,
    load_run_config,
    run_config_from_record,
    run_config_to_record,
)
from .engine import ArchitectureSpace, CorruptSnapshot, VersionMismatch
from .genome import genome_from_record, genome_to_record, infer_shapes, genome_fingerprint, layer_census
from .telemetry import CSV_COLUMNS, Telemetry

MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.json"
TELEMETRY_NAME = "telemetry.jsonl"
CSV_NAME = "iterations.csv"
CHECKPOINT_NAME = "checkpoint.json"
FINAL_MODELS_NAME = "final_models.json"

WORKERS_ENV = "CHIMERA_WORKERS"


class CliError(RuntimeError):
    def __init__(self, message: str, kind: str = "error", code: int = 1):
        super().__init__(message)
        self.kind = kind
        self.code = code


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _dump(record) -> str:
    return json.dumps(record, indent=2, sort_keys=True) + "\n"


def _apply_overrides(record: dict, args) -> dict:
    if getattr(args, "seed", None) is not None:
        record.setdefault("engine", {})["rng_seed"] = args.seed
    if getattr(args, "evaluator", None) is not None:
        record.setdefault("evaluator", {})["type"] = args.evaluator
    workers = os.environ.get(WORKERS_ENV)
    if workers is not None:
        try:
            record.setdefault("engine", {})["parallel_evals"] = int(workers)
        except ValueError:
            raise CliError(f"{WORKERS_ENV} must be an integer, got {workers!r}", kind="config", code=2)
    return record


def _load_config_record(path: str) -> dict:
    try:
        record = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", kind="config", code=2)
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}", kind="config", code=2)
    if not isinstance(record, dict):
        raise CliError(f"config {path} must be a JSON object", kind="config", code=2)
    return record


def _echo_factory(quiet: bool):
    if quiet:
        return None

    def echo(record: dict):
        print(
            f"iter {record['iteration']:>4}  best {record['best_loss']:.6f}  "
            f"mean {record['mean_loss']:.6f}  archive {record['archive_size']}  "
            f"evals {record['evals_total']}"
        )

    return echo


def _final_models_record(models, space) -> list[dict]:
    return [
        {
            "fingerprint": space.fingerprint(candidate.genome),
            "loss": candidate.loss,
            "fitness": candidate.fitness,
            "eval_id": candidate.eval_id,
            "genome": space.to_record(candidate.genome),
        }
        for candidate in models
    ]


def _execute(run_dir: Path, config_record: dict, state=None, append_telemetry: bool = False) -> int:
    try:
        config = run_config_from_record(config_record)
    except ConfigError as exc:
        raise CliError(str(exc), kind="config", code=2)
    space = ArchitectureSpace(config.engine.bounds, config.engine.mutation)
    evaluator_record = run_config_to_record(config, space)["evaluator"]

    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "engine_version": __version__,
        "rng_seed": config.engine.rng_seed,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "finished_at": None,
        "status": "running",
        "config": CONFIG_NAME,
        "telemetry": TELEMETRY_NAME,
        "iterations_csv": CSV_NAME,
        "checkpoint": CHECKPOINT_NAME,
        "final_models": FINAL_MODELS_NAME,
    }
    _write_atomic(run_dir / MANIFEST_NAME, _dump(manifest))
    _write_atomic(run_dir / CONFIG_NAME, _dump(run_config_to_record(config, space)))

    def checkpoint_sink(snapshot: dict):
        snapshot["config"]["evaluator"] = evaluator_record
        _write_atomic(run_dir / CHECKPOINT_NAME, _dump(snapshot))

    evaluator = build_evaluator(config.evaluator, config.engine)
    quiet = config_record.get("_quiet", False)
    telemetry = Telemetry(
        jsonl_path=run_dir / TELEMETRY_NAME,
        csv_path=run_dir / CSV_NAME,
        echo=_echo_factory(quiet),
        keep_records=False,
        append=append_telemetry,
    )
    status = "failed"
    try:
        models = engine.run(
            config.engine,
            evaluator,
            space=space,
            telemetry=telemetry,
            state=state,
            checkpoint_sink=checkpoint_sink,
        )
        final = _final_models_record(models, space)
        _write_atomic(run_dir / FINAL_MODELS_NAME, json.dumps(final, sort_keys=True, indent=2) + "\n")
        status = "completed"
        if not quiet:
            print(f"final models: {len(final)} (best loss {final[0]['loss']:.6f}) -> {run_dir / FINAL_MODELS_NAME}")
        return 0
    finally:
        telemetry.close()
        close = getattr(evaluator, "close", None)
        if close is not None:
            close()
        manifest["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        manifest["status"] = status
        stats = getattr(evaluator, "stats", None)
        if stats is not None:
            manifest["evaluator_stats"] = stats()
        _write_atomic(run_dir / MANIFEST_NAME, _dump(manifest))


def cmd_run(args) -> int:
    record = _apply_overrides(_load_config_record(args.config), args)
    record["_quiet"] = args.quiet
    run_dir = Path(args.out)
    if (run_dir / MANIFEST_NAME).exists():
        raise CliError(f"{run_dir} already holds a run; choose a fresh --out directory", kind="config", code=2)
    return _execute(run_dir, record)


def _truncate_artifacts(run_dir: Path, iteration: int, next_request_id: int) -> None:
    """Drop telemetry written after the checkpoint so the resumed stream
    matches an uninterrupted run."""
    telemetry_path = run_dir / TELEMETRY_NAME
    if telemetry_path.exists():
        kept = []
        for line in telemetry_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                continue
            if record.get("type") == "eval" and record.get("request_id", 0) >= next_request_id:
                continue
            if record.get("type") == "iteration" and record.get("iteration", 0) > iteration:
                continue
            kept.append(line)
        _write_atomic(telemetry_path, "".join(k + "\n" for k in kept))
    csv_path = run_dir / CSV_NAME
    if csv_path.exists():
        lines = csv_path.read_text(encoding="utf-8").splitlines()
        kept = lines[:1]
        for line in lines[1:]:
            try:
                if int(line.split(",", 1)[0]) <= iteration:
                    kept.append(line)
            except ValueError:
                continue
        _write_atomic(csv_path, "".join(k + "\n" for k in kept))


def cmd_resume(args) -> int:
    checkpoint_path = Path(args.checkpoint)
    try:
        snapshot = json.loads(checkpoint_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read checkpoint {checkpoint_path}: {exc}", kind="config", code=2)
    except json.JSONDecodeError as exc:
        raise CorruptSnapshot(f"checkpoint {checkpoint_path} is not valid JSON: {exc}") from exc
    state, config, space = engine.restore(snapshot)
    run_dir = checkpoint_path.parent
    record = snapshot["config"]
    record["_quiet"] = args.quiet
    _truncate_artifacts(run_dir, state.iteration, state.next_request_id)
    return _execute(run_dir, record, state=state, append_telemetry=True)


def cmd_export(args) -> int:
    run_dir = Path(args.run)
    telemetry_path = run_dir / TELEMETRY_NAME
    if not telemetry_path.exists():
        raise CliError(f"no telemetry found under {run_dir}", kind="missing-artifact")
    rows = []
    for line in telemetry_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            continue
        if record.get("type") == "iteration":
            rows.append([record.get(column) for column in CSV_COLUMNS])
    if not rows:
        raise CliError(f"run under {run_dir} has no completed iterations to export", kind="missing-artifact")
    lines = [",".join(CSV_COLUMNS)] + [",".join(str(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_validate_config(args) -> int:
    record = _apply_overrides(_load_config_record(args.config), args)
    try:
        run_config_from_record(record)
    except ConfigError as exc:
        raise CliError(str(exc), kind="config", code=2)
    print(f"config OK: {args.config}")
    return 0


def cmd_print_genome(args) -> int:
    try:
        record = json.loads(Path(args.genome).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read genome file {args.genome}: {exc}", kind="config", code=2)
    genome = genome_from_record(record)
    trace = infer_shapes(genome)
    n_conv, n_pool, n_act = layer_census(genome)
    print(f"fingerprint : {genome_fingerprint(genome)}")
    print(f"lineage     : {genome.lineage_id}")
    print(f"input shape : {genome.input_shape}  output arity: {genome.output_arity}")
    print(f"lr hint     : {genome.lr_hint}  channel width: {genome.channel_width}")
    print(f"census      : conv={n_conv} pool={n_pool} act={n_act}")
    for i, (layer, shape) in enumerate(zip(genome.layers, trace[1:])):
        if layer.kernel is None:
            detail = ""
        else:
            detail = f" k={layer.kernel} s={layer.stride} p={layer.padding}"
            if layer.weight_seed is not None:
                detail += f" seed={layer.weight_seed}"
        print(f"  {i:>2} {layer.kind.value:<8}{detail}  -> {shape}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chimera", description=__doc__)
    parser.add_argument("--version", action="version", version=f"chimera {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run a search from a config file")
    run_parser.add_argument("--config", required=True, help="path to the run config (JSON)")
    run_parser.add_argument("--out", required=True, help="run directory to create")
    run_parser.add_argument("--seed", type=int, default=None, help="override engine.rng_seed")
    run_parser.add_argument("--evaluator", choices=["surrogate", "external", "stub"], default=None)
    run_parser.add_argument("--quiet", action="store_true")
    run_parser.set_defaults(func=cmd_run)

    resume_parser = sub.add_parser("resume", help="continue a checkpointed search")
    resume_parser.add_argument("--checkpoint", required=True, help="path to checkpoint.json")
    resume_parser.add_argument("--quiet", action="store_true")
    resume_parser.set_defaults(func=cmd_resume)

    export_parser = sub.add_parser("export", help="emit the iteration-level convergence CSV")
    export_parser.add_argument("--run", required=True, help="run directory")
    export_parser.add_argument("--format", choices=["csv"], default="csv")
    export_parser.add_argument("--out", default=None, help="write to this file instead of stdout")
    export_parser.set_defaults(func=cmd_export)

    validate_parser = sub.add_parser("validate-config", help="parse and validate a config file")
    validate_parser.add_argument("--config", required=True)
    validate_parser.set_defaults(func=cmd_validate_config)

    print_parser = sub.add_parser("print-genome", help="pretty-print a serialized genome")
    print_parser.add_argument("genome", help="path to a genome record (JSON)")
    print_parser.set_defaults(func=cmd_print_genome)
    return parser


def _error_record(kind: str, message: str) -> str:
    return json.dumps({"error": kind, "message": message}, sort_keys=True)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(_error_record(exc.kind, str(exc)), file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(_error_record("config", str(exc)), file=sys.stderr)
        return 2
    except VersionMismatch as exc:
        print(_error_record("version-mismatch", str(exc)), file=sys.stderr)
        return 1
    except CorruptSnapshot as exc:
        print(_error_record("corrupt-snapshot", str(exc)), file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - last-resort reporting
        print(_error_record(type(exc).__name__, str(exc)), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
