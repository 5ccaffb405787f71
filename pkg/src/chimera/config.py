"""Run configuration: the documented JSON schema behind config files and checkpoints.

A run config has four sections: ``engine`` (loop parameters), ``mutation``
(step probabilities and kernel interval), ``bounds`` (architecture limits),
and ``evaluator`` (which evaluator to use and how). The kernel interval lives
in the mutation section of the file and also populates the bounds the samplers
read.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import EngineConfig
from .evaluator import (
    CachingEvaluator,
    ConstantEvaluator,
    EvalBudget,
    ExternalProcessEvaluator,
    SurrogateLandscape,
)
from .genome import Genome, SearchBounds, genome_from_record, random_genome
from .mutation import MutationConfig


class ConfigError(ValueError):
    """A config file or record failed validation; the message names the field."""


EVALUATOR_TYPES = ("surrogate", "external", "stub")


@dataclass
class EvaluatorSpec:
    type: str = "surrogate"
    target: dict | None = None
    target_seed: int | None = None
    loss: float = 0.5
    command: list[str] | None = None
    timeout_seconds: float = 300.0
    budget: EvalBudget | None = None
    workers: int | None = None
    cache: bool = False

    def __post_init__(self):
        if self.type not in EVALUATOR_TYPES:
            raise ConfigError(f"evaluator.type must be one of {EVALUATOR_TYPES}, got {self.type!r}")
        if self.type == "external" and not self.command:
            raise ConfigError("evaluator.command is required for the external evaluator")


@dataclass
class RunConfig:
    engine: EngineConfig
    evaluator: EvaluatorSpec


def _section(record: dict, name: str, required: bool = False) -> dict:
    section = record.get(name, {})
    if section is None:
        section = {}
    if required and not section:
        raise ConfigError(f"missing required config section {name!r}")
    if not isinstance(section, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return dict(section)


def _reject_unknown(section: dict, name: str, known: set[str]) -> None:
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown field(s) in {name!r} section: {sorted(unknown)}")


def _pair(value) -> tuple[int, int] | None:
    if value is None:
        return None
    return int(value[0]), int(value[1])


def mutation_from_record(section: dict) -> MutationConfig:
    _reject_unknown(
        section, "mutation", {"p_add", "p_remove", "p_modify", "p_reseed", "kernel_min", "kernel_max", "max_retries"}
    )
    try:
        return MutationConfig(
            p_add=float(section.get("p_add", 0.30)),
            p_remove=float(section.get("p_remove", 0.30)),
            p_modify=float(section.get("p_modify", 0.30)),
            p_reseed=float(section.get("p_reseed", 0.10)),
            kernel_range=(int(section.get("kernel_min", 1)), int(section.get("kernel_max", 7))),
            max_retries=int(section.get("max_retries", 16)),
        )
    except ValueError as exc:
        raise ConfigError(f"mutation.{exc}") from exc


def bounds_from_record(section: dict, kernel_range: tuple[int, int]) -> SearchBounds:
    _reject_unknown(
        section,
        "bounds",
        {"input_shape", "output_arity", "max_layers", "conv_stride", "pool_stride", "channel_width", "default_lr"},
    )
    try:
        return SearchBounds(
            input_shape=tuple(int(v) for v in section.get("input_shape", (3, 32, 32))),
            output_arity=int(section.get("output_arity", 10)),
            max_layers=int(section.get("max_layers", 12)),
            kernel_range=kernel_range,
            conv_stride=_pair(section.get("conv_stride", (1, 1))),
            pool_stride=_pair(section.get("pool_stride")),
            channel_width=int(section.get("channel_width", 32)),
            default_lr=float(section.get("default_lr", 1e-3)),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bounds.{exc}") from exc


def engine_config_from_record(record: dict, genome_decoder=genome_from_record) -> EngineConfig:
    """EngineConfig (with bounds and mutation) from a config record."""
    if not isinstance(record, dict):
        raise ConfigError("config must be a JSON object")
    mutation = mutation_from_record(_section(record, "mutation"))
    bounds = bounds_from_record(_section(record, "bounds"), mutation.kernel_range)
    section = _section(record, "engine", required=True)
    _reject_unknown(
        section,
        "engine",
        {
            "population_size",
            "max_iter",
            "loss_threshold",
            "max_exhaustion",
            "seed_genome",
            "rng_seed",
            "parallel_evals",
        },
    )
    seed_genome = section.get("seed_genome")
    if seed_genome is not None:
        seed_genome = genome_decoder(seed_genome)
    threshold = section.get("loss_threshold")
    max_exhaustion = section.get("max_exhaustion")
    try:
        return EngineConfig(
            population_size=int(section.get("population_size", 4)),
            max_iter=int(section.get("max_iter", 16)),
            bounds=bounds,
            mutation=mutation,
            loss_threshold=None if threshold is None else float(threshold),
            max_exhaustion=None if max_exhaustion is None else int(max_exhaustion),
            seed_genome=seed_genome,
            rng_seed=int(section.get("rng_seed", 0)),
            parallel_evals=int(section.get("parallel_evals", 1)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def engine_config_to_record(config: EngineConfig, space=None) -> dict:
    bounds, mutation = config.bounds, config.mutation
    seed_record = None
    if config.seed_genome is not None:
        if space is not None:
            seed_record = space.to_record(config.seed_genome)
        elif isinstance(config.seed_genome, Genome):
            from .genome import genome_to_record

            seed_record = genome_to_record(config.seed_genome)
        else:
            seed_record = config.seed_genome
    return {
        "engine": {
            "population_size": config.population_size,
            "max_iter": config.max_iter,
            "loss_threshold": config.loss_threshold,
            "max_exhaustion": config.max_exhaustion,
            "seed_genome": seed_record,
            "rng_seed": config.rng_seed,
            "parallel_evals": config.parallel_evals,
        },
        "mutation": {
            "p_add": mutation.p_add,
            "p_remove": mutation.p_remove,
            "p_modify": mutation.p_modify,
            "p_reseed": mutation.p_reseed,
            "kernel_min": mutation.kernel_range[0],
            "kernel_max": mutation.kernel_range[1],
            "max_retries": mutation.max_retries,
        },
        "bounds": {
            "input_shape": list(bounds.input_shape),
            "output_arity": bounds.output_arity,
            "max_layers": bounds.max_layers,
            "conv_stride": list(bounds.conv_stride),
            "pool_stride": None if bounds.pool_stride is None else list(bounds.pool_stride),
            "channel_width": bounds.channel_width,
            "default_lr": bounds.default_lr,
        },
    }


def evaluator_spec_from_record(section: dict) -> EvaluatorSpec:
    _reject_unknown(
        section,
        "evaluator",
        {"type", "target", "target_seed", "loss", "command", "timeout_seconds", "budget", "workers", "cache"},
    )
    budget = section.get("budget")
    if budget is not None:
        try:
            budget = EvalBudget(max_epochs=int(budget["max_epochs"]), patience=int(budget["patience"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"evaluator.budget needs integer max_epochs and patience: {exc}") from exc
    command = section.get("command")
    if command is not None:
        command = [str(part) for part in command]
    return EvaluatorSpec(
        type=str(section.get("type", "surrogate")),
        target=section.get("target"),
        target_seed=section.get("target_seed"),
        loss=float(section.get("loss", 0.5)),
        command=command,
        timeout_seconds=float(section.get("timeout_seconds", 300.0)),
        budget=budget,
        workers=None if section.get("workers") is None else int(section["workers"]),
        cache=bool(section.get("cache", False)),
    )


def evaluator_spec_to_record(spec: EvaluatorSpec) -> dict:
    record: dict = {"type": spec.type, "cache": spec.cache}
    if spec.type == "surrogate":
        if spec.target is not None:
            record["target"] = spec.target
        if spec.target_seed is not None:
            record["target_seed"] = spec.target_seed
    elif spec.type == "stub":
        record["loss"] = spec.loss
    elif spec.type == "external":
        record["command"] = spec.command
        record["timeout_seconds"] = spec.timeout_seconds
        if spec.budget is not None:
            record["budget"] = {"max_epochs": spec.budget.max_epochs, "patience": spec.budget.patience}
        if spec.workers is not None:
            record["workers"] = spec.workers
    return record


def run_config_from_record(record: dict) -> RunConfig:
    engine = engine_config_from_record(record)
    evaluator = evaluator_spec_from_record(_section(record, "evaluator"))
    return RunConfig(engine=engine, evaluator=evaluator)


def run_config_to_record(config: RunConfig, space=None) -> dict:
    record = engine_config_to_record(config.engine, space)
    record["evaluator"] = evaluator_spec_to_record(config.evaluator)
    return record


def load_run_config(path: str | Path) -> RunConfig:
    try:
        record = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return run_config_from_record(record)


def surrogate_target(spec: EvaluatorSpec, engine: EngineConfig) -> Genome:
    if spec.target is not None:
        return genome_from_record(spec.target)
    seed = 0 if spec.target_seed is None else spec.target_seed
    return random_genome(engine.bounds, np.random.default_rng(seed))


def build_evaluator(spec: EvaluatorSpec, engine: EngineConfig):
    """Instantiate the configured evaluator; the caller owns close() for external pools."""
    if spec.type == "surrogate":
        evaluator = SurrogateLandscape(surrogate_target(spec, engine))
    elif spec.type == "stub":
        evaluator = ConstantEvaluator(spec.loss)
    else:
        evaluator = ExternalProcessEvaluator(
            spec.command,
            timeout=spec.timeout_seconds,
            workers=spec.workers if spec.workers is not None else engine.parallel_evals,
            budget=spec.budget,
        )
    if spec.cache:
        evaluator = CachingEvaluator(evaluator)
    return evaluator
