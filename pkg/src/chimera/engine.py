"""The bee-colony search loop over architecture genomes.

Employed agents each explore the neighborhood of their own candidate; onlooker
agents re-explore candidates drawn by fitness-proportional roulette. A
candidate that keeps failing to improve is archived as a plausible optimum and
its slot reseeded with a fresh random solution, which keeps population
diversity without ever discarding good finds.

The loop is generic over a ``SearchSpace`` (how to create, mutate, and
serialize genomes), so the same engine runs CNN-architecture search and plain
numeric benchmarks. Within each phase all trial mutations are drawn
sequentially from the single run RNG, evaluations may run concurrently, and
bookkeeping is applied at a phase barrier in draw order — results are
therefore independent of evaluation scheduling.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from . import __version__
from .evaluator import EvalStatus, EvaluationRequest, EvaluationResult, Evaluator
from .genome import (
    Genome,
    RandomSource,
    SearchBounds,
    genome_fingerprint,
    genome_from_record,
    genome_to_record,
    random_genome,
    with_lr_hint,
)
from .mutation import MutationConfig, mutate
from .telemetry import Telemetry

log = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1

# Retries when an initial or replacement candidate fails evaluation outright.
INIT_EVAL_RETRIES = 16

# Relative change below which a reported learning rate does not update the
# genome hint (keeps fingerprints stable under round-trip float noise).
LR_HINT_EPSILON = 1e-9


class ContractViolation(RuntimeError):
    """An evaluator response broke the evaluation contract."""


class EngineError(RuntimeError):
    """The search loop cannot continue (e.g. evaluator keeps failing)."""


class VersionMismatch(RuntimeError):
    """Snapshot was written by an incompatible engine version."""


class CorruptSnapshot(RuntimeError):
    """Snapshot is unreadable or structurally broken."""


class SearchSpace(Protocol):
    """What the engine needs to know about a genome representation."""

    def random_genome(self, rng: RandomSource) -> Any: ...

    def mutate(self, genome: Any, exhaustion: int, rng: RandomSource) -> Any: ...

    def fingerprint(self, genome: Any) -> str: ...

    def lr_hint(self, genome: Any) -> float: ...

    def with_lr_hint(self, genome: Any, lr: float) -> Any: ...

    def to_record(self, genome: Any) -> Any: ...

    def from_record(self, record: Any) -> Any: ...

    def describe(self, genome: Any) -> dict: ...


class ArchitectureSpace:
    """CNN-genome instantiation of the search space."""

    def __init__(self, bounds: SearchBounds, mutation: MutationConfig):
        self.bounds = bounds
        self.mutation = mutation

    def random_genome(self, rng: RandomSource) -> Genome:
        return random_genome(self.bounds, rng)

    def mutate(self, genome: Genome, exhaustion: int, rng: RandomSource) -> Genome:
        return mutate(genome, exhaustion, self.mutation, self.bounds, rng)

    def fingerprint(self, genome: Genome) -> str:
        return genome_fingerprint(genome)

    def lr_hint(self, genome: Genome) -> float:
        return genome.lr_hint

    def with_lr_hint(self, genome: Genome, lr: float) -> Genome:
        return with_lr_hint(genome, lr)

    def to_record(self, genome: Genome) -> dict:
        return genome_to_record(genome)

    def from_record(self, record: dict) -> Genome:
        return genome_from_record(record)

    def describe(self, genome: Genome) -> dict:
        return {
            "fingerprint": genome_fingerprint(genome),
            "lineage_id": genome.lineage_id,
            "layer_count": len(genome.layers),
        }


@dataclass
class Candidate:
    """A food source: genome plus its evaluated loss and exhaustion counter."""

    genome: Any
    loss: float
    fitness: float
    exhaustion: int
    eval_id: int


@dataclass
class EngineConfig:
    population_size: int
    max_iter: int
    bounds: SearchBounds = field(default_factory=SearchBounds)
    mutation: MutationConfig = field(default_factory=MutationConfig)
    loss_threshold: float | None = None
    max_exhaustion: int | None = None
    seed_genome: Any | None = None
    rng_seed: int = 0
    parallel_evals: int = 1

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("engine.population_size must be >= 1")
        if self.max_iter < 1:
            raise ValueError("engine.max_iter must be >= 1")
        if self.loss_threshold is not None and self.loss_threshold < 0:
            raise ValueError("engine.loss_threshold must be >= 0")
        if self.max_exhaustion is not None and self.max_exhaustion < 1:
            raise ValueError("engine.max_exhaustion must be >= 1")
        if self.parallel_evals < 1:
            raise ValueError("engine.parallel_evals must be >= 1")


@dataclass
class SearchState:
    candidates: list[Candidate]
    archive: list[Candidate]
    iteration: int
    rng: RandomSource
    evals_total: int = 0
    next_request_id: int = 0
    best_loss: float = math.inf


def fitness(loss: float) -> float:
    """Score of a candidate with validation loss ``loss``: 1 / (1 + loss)."""
    if not (isinstance(loss, (int, float)) and math.isfinite(loss)):
        raise ContractViolation(f"loss must be finite, got {loss!r}")
    if loss < 0:
        raise ContractViolation(f"loss must be non-negative, got {loss!r}")
    return 1.0 / (1.0 + loss)


def roulette_draws(fitnesses, count: int, rng: RandomSource) -> list[int]:
    """``count`` candidate indices drawn with replacement, proportional to fitness."""
    weights = np.asarray(fitnesses, dtype=float)
    return [int(i) for i in rng.choice(len(weights), size=count, p=weights / weights.sum())]


def _lr_bounds(hint: float) -> tuple[float, float]:
    # lr_low == lr_high / 100 holds exactly by construction.
    lr_high = hint * 10.0
    return lr_high / 100.0, lr_high


def _validate_result(request: EvaluationRequest, result: EvaluationResult) -> None:
    if result.request_id != request.request_id:
        raise ContractViolation(
            f"result id {result.request_id} does not match request {request.request_id}"
        )
    if result.status is not EvalStatus.OK:
        return
    if result.val_loss is None or not math.isfinite(result.val_loss) or result.val_loss < 0:
        raise ContractViolation(f"ok result needs a finite non-negative val_loss, got {result.val_loss!r}")
    if result.chosen_lr is None or not (request.lr_low <= result.chosen_lr <= request.lr_high):
        raise ContractViolation(
            f"chosen_lr {result.chosen_lr!r} outside [{request.lr_low}, {request.lr_high}]"
        )


def _evaluate_batch(
    state: SearchState,
    config: EngineConfig,
    space: SearchSpace,
    evaluator: Evaluator,
    genomes: list,
    phase: str,
    slots: list[int],
    telemetry: Telemetry | None,
) -> list[EvaluationResult]:
    requests = []
    for genome in genomes:
        lr_low, lr_high = _lr_bounds(space.lr_hint(genome))
        requests.append(EvaluationRequest(state.next_request_id, genome, lr_low, lr_high))
        state.next_request_id += 1
    if config.parallel_evals > 1 and len(requests) > 1:
        with ThreadPoolExecutor(max_workers=config.parallel_evals) as pool:
            results = list(pool.map(evaluator.evaluate, requests))
    else:
        results = [evaluator.evaluate(request) for request in requests]
    for request, result, slot in zip(requests, results, slots):
        _validate_result(request, result)
        state.evals_total += 1
        if telemetry is not None:
            telemetry.eval_event(
                request_id=request.request_id,
                iteration=state.iteration,
                phase=phase,
                slot=slot,
                status=result.status.value,
                val_loss=result.val_loss,
                train_loss=result.train_loss,
                chosen_lr=result.chosen_lr,
                lr_low=request.lr_low,
                lr_high=request.lr_high,
                wall_seconds=result.wall_seconds,
                **space.describe(request.genome),
            )
    return results


def _adopt(space: SearchSpace, genome, result: EvaluationResult) -> Candidate:
    """Candidate from an accepted evaluation; the reported learning rate becomes
    the genome's hint so children anchor their search on it."""
    hint = space.lr_hint(genome)
    if result.chosen_lr is not None and abs(result.chosen_lr - hint) > LR_HINT_EPSILON * hint:
        genome = space.with_lr_hint(genome, result.chosen_lr)
    return Candidate(
        genome=genome,
        loss=result.val_loss,
        fitness=fitness(result.val_loss),
        exhaustion=0,
        eval_id=result.request_id,
    )


def _fresh_candidate(
    state: SearchState,
    config: EngineConfig,
    space: SearchSpace,
    evaluator: Evaluator,
    phase: str,
    slot: int,
    telemetry: Telemetry | None,
) -> Candidate:
    for _ in range(INIT_EVAL_RETRIES):
        genome = space.random_genome(state.rng)
        result = _evaluate_batch(state, config, space, evaluator, [genome], phase, [slot], telemetry)[0]
        if result.status is EvalStatus.OK:
            return _adopt(space, genome, result)
        log.warning("%s evaluation failed (%s); drawing a fresh genome", phase, result.status.value)
    raise EngineError(f"evaluator failed {INIT_EVAL_RETRIES} consecutive {phase} evaluations")


def _note_losses(state: SearchState) -> None:
    state.best_loss = min(state.best_loss, min(c.loss for c in state.candidates))


def initialize(
    config: EngineConfig,
    space: SearchSpace,
    evaluator: Evaluator,
    telemetry: Telemetry | None = None,
) -> SearchState:
    """Build and evaluate the starting population.

    With a seed genome, slot 0 holds an exact copy and every other slot a
    mutated descendant; otherwise all slots start from random genomes.
    """
    state = SearchState(candidates=[], archive=[], iteration=0, rng=np.random.default_rng(config.rng_seed))
    if config.seed_genome is not None:
        genomes = [config.seed_genome]
        genomes += [space.mutate(config.seed_genome, 0, state.rng) for _ in range(config.population_size - 1)]
    else:
        genomes = [space.random_genome(state.rng) for _ in range(config.population_size)]
    slots = list(range(len(genomes)))
    results = _evaluate_batch(state, config, space, evaluator, genomes, "init", slots, telemetry)
    for slot, (genome, result) in enumerate(zip(genomes, results)):
        if result.status is EvalStatus.OK:
            state.candidates.append(_adopt(space, genome, result))
        else:
            log.warning("initial evaluation failed (%s); replacing slot %d", result.status.value, slot)
            state.candidates.append(_fresh_candidate(state, config, space, evaluator, "init", slot, telemetry))
    _note_losses(state)
    return state


def _compare_and_update(state: SearchState, space: SearchSpace, slot: int, trial, result: EvaluationResult) -> None:
    """Replace the candidate on strict improvement, else bump its exhaustion.

    Ties and failed evaluations both count as non-improvements: a tie resets
    nothing, otherwise stagnating candidates would never exhaust.
    """
    incumbent = state.candidates[slot]
    if result.status is EvalStatus.OK and result.val_loss < incumbent.loss:
        state.candidates[slot] = _adopt(space, trial, result)
    else:
        incumbent.exhaustion += 1


def employed_phase(
    state: SearchState,
    config: EngineConfig,
    space: SearchSpace,
    evaluator: Evaluator,
    telemetry: Telemetry | None = None,
) -> SearchState:
    """One neighborhood trial per candidate, then archival of exhausted slots."""
    trials = [space.mutate(c.genome, c.exhaustion, state.rng) for c in state.candidates]
    slots = list(range(len(trials)))
    results = _evaluate_batch(state, config, space, evaluator, trials, "employed", slots, telemetry)
    for slot, (trial, result) in enumerate(zip(trials, results)):
        _compare_and_update(state, space, slot, trial, result)
    if config.max_exhaustion is not None:
        for slot, candidate in enumerate(state.candidates):
            if candidate.exhaustion >= config.max_exhaustion:
                state.archive.append(candidate)
                state.candidates[slot] = _fresh_candidate(
                    state, config, space, evaluator, "reinit", slot, telemetry
                )
    _note_losses(state)
    return state


def onlooker_phase(
    state: SearchState,
    config: EngineConfig,
    space: SearchSpace,
    evaluator: Evaluator,
    telemetry: Telemetry | None = None,
) -> SearchState:
    """Roulette-weighted re-exploration; draws happen before any trial is evaluated.

    Exhausted candidates found here are left for the next employed phase to
    archive.
    """
    draws = roulette_draws([c.fitness for c in state.candidates], config.population_size, state.rng)
    trials = [space.mutate(state.candidates[j].genome, state.candidates[j].exhaustion, state.rng) for j in draws]
    results = _evaluate_batch(state, config, space, evaluator, trials, "onlooker", draws, telemetry)
    for slot, trial, result in zip(draws, trials, results):
        _compare_and_update(state, space, slot, trial, result)
    _note_losses(state)
    return state


def check_stop(state: SearchState, config: EngineConfig) -> bool:
    if state.iteration >= config.max_iter:
        return True
    if config.loss_threshold is not None and state.candidates:
        if min(c.loss for c in state.candidates) < config.loss_threshold:
            return True
    return False


def final_models(state: SearchState, space: SearchSpace) -> list[Candidate]:
    """Archive plus current population, deduplicated by fingerprint, best first."""
    pool = sorted(state.archive + state.candidates, key=lambda c: c.loss)
    seen: set[str] = set()
    unique = []
    for candidate in pool:
        key = space.fingerprint(candidate.genome)
        if key in seen:
            continue
        seen.add(key)
        unique.append(candidate)
    return unique


def run(
    config: EngineConfig,
    evaluator: Evaluator,
    space: SearchSpace | None = None,
    telemetry: Telemetry | None = None,
    state: SearchState | None = None,
    checkpoint_sink=None,
) -> list[Candidate]:
    """Alternate employed and onlooker phases until a stop criterion fires.

    ``state`` may come from ``restore`` to continue an interrupted search.
    ``checkpoint_sink`` (if set) receives a snapshot dict after every
    iteration, and a final one if the loop aborts on an evaluator error.
    """
    if space is None:
        space = ArchitectureSpace(config.bounds, config.mutation)
    if state is None:
        state = initialize(config, space, evaluator, telemetry)
    try:
        while not check_stop(state, config):
            employed_phase(state, config, space, evaluator, telemetry)
            onlooker_phase(state, config, space, evaluator, telemetry)
            state.iteration += 1
            if telemetry is not None:
                losses = [c.loss for c in state.candidates]
                telemetry.iteration_event(
                    iteration=state.iteration,
                    best_loss=state.best_loss,
                    mean_loss=sum(losses) / len(losses),
                    worst_loss=max(losses),
                    archive_size=len(state.archive),
                    evals_total=state.evals_total,
                )
            if checkpoint_sink is not None:
                checkpoint_sink(checkpoint(state, config, space))
    except BaseException:
        if checkpoint_sink is not None:
            try:
                checkpoint_sink(checkpoint(state, config, space))
            except Exception:
                log.exception("failed to persist checkpoint while aborting")
        raise
    return final_models(state, space)


def _candidate_record(candidate: Candidate, space: SearchSpace) -> dict:
    return {
        "genome": space.to_record(candidate.genome),
        "loss": candidate.loss,
        "exhaustion": candidate.exhaustion,
        "eval_id": candidate.eval_id,
    }


def _candidate_from_record(record: dict, space: SearchSpace) -> Candidate:
    return Candidate(
        genome=space.from_record(record["genome"]),
        loss=float(record["loss"]),
        fitness=fitness(float(record["loss"])),
        exhaustion=int(record["exhaustion"]),
        eval_id=int(record["eval_id"]),
    )


def checkpoint(state: SearchState, config: EngineConfig, space: SearchSpace) -> dict:
    """Snapshot from which ``restore`` resumes with bit-identical behavior."""
    from .config import engine_config_to_record

    return {
        "version": SNAPSHOT_VERSION,
        "engine_version": __version__,
        "config": engine_config_to_record(config, space),
        "iteration": state.iteration,
        "evals_total": state.evals_total,
        "next_request_id": state.next_request_id,
        "best_loss": state.best_loss,
        "rng_state": state.rng.bit_generator.state,
        "candidates": [_candidate_record(c, space) for c in state.candidates],
        "archive": [_candidate_record(c, space) for c in state.archive],
    }


def restore(
    snapshot: dict,
    space: SearchSpace | None = None,
    config: EngineConfig | None = None,
) -> tuple[SearchState, EngineConfig, SearchSpace]:
    """Rebuild (state, config, space) from a snapshot dict.

    Raises VersionMismatch for snapshots of another format version and
    CorruptSnapshot for structurally broken ones.
    """
    from .config import engine_config_from_record

    if not isinstance(snapshot, dict) or "version" not in snapshot:
        raise CorruptSnapshot("snapshot is not a versioned object")
    if snapshot["version"] != SNAPSHOT_VERSION:
        raise VersionMismatch(f"snapshot version {snapshot['version']!r}, expected {SNAPSHOT_VERSION}")
    try:
        if config is None:
            config = engine_config_from_record(snapshot["config"])
        if space is None:
            space = ArchitectureSpace(config.bounds, config.mutation)
        rng_state = snapshot["rng_state"]
        bit_generator = np.random.PCG64()
        if rng_state["bit_generator"] != bit_generator.state["bit_generator"]:
            raise CorruptSnapshot(f"unsupported rng kind {rng_state['bit_generator']!r}")
        bit_generator.state = rng_state
        state = SearchState(
            candidates=[_candidate_from_record(r, space) for r in snapshot["candidates"]],
            archive=[_candidate_from_record(r, space) for r in snapshot["archive"]],
            iteration=int(snapshot["iteration"]),
            rng=np.random.Generator(bit_generator),
            evals_total=int(snapshot["evals_total"]),
            next_request_id=int(snapshot["next_request_id"]),
            best_loss=float(snapshot["best_loss"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptSnapshot(f"snapshot is structurally broken: {exc}") from exc
    return state, config, space
