"""Black-box evaluation contract and its built-in implementations.

Evaluators turn a genome into a validation loss. The engine only ever sees the
``evaluate(request) -> result`` contract, so training can be a deterministic
surrogate (tests, benchmarks), a memoizing wrapper, or a pool of external
trainer processes speaking a line-delimited JSON protocol.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import subprocess
import threading
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Callable, Protocol

from .genome import Genome, genome_fingerprint, genome_to_record

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1


class EvalStatus(Enum):
    OK = "ok"
    TRAIN_FAILED = "train_failed"
    INVALID = "invalid"


@dataclass(frozen=True)
class EvalBudget:
    max_epochs: int
    patience: int


@dataclass(frozen=True)
class EvaluationRequest:
    request_id: int
    genome: Any
    lr_low: float
    lr_high: float
    budget: EvalBudget | None = None


@dataclass(frozen=True)
class EvaluationResult:
    request_id: int
    status: EvalStatus
    val_loss: float | None = None
    train_loss: float | None = None
    chosen_lr: float | None = None
    wall_seconds: float = 0.0

    @classmethod
    def ok(cls, request_id, val_loss, chosen_lr, train_loss=None, wall_seconds=0.0):
        return cls(request_id, EvalStatus.OK, float(val_loss), train_loss, float(chosen_lr), wall_seconds)

    @classmethod
    def failed(cls, request_id, status=EvalStatus.TRAIN_FAILED):
        return cls(request_id, status)


class Evaluator(Protocol):
    def evaluate(self, request: EvaluationRequest) -> EvaluationResult: ...


def geometric_mean_lr(lr_low: float, lr_high: float) -> float:
    return math.sqrt(lr_low * lr_high)


def architecture_distance(genome: Genome, target: Genome) -> float:
    """Weighted edit distance between two layer stacks, aligned at position 0.

    Terms: |layer-count difference| + per matched position: 1.0 for a kind
    mismatch, else 0.1 per axis unit of kernel difference and 0.05 per axis
    unit of padding difference. Zero iff the compared fields are equal.
    """
    distance = float(abs(len(genome.layers) - len(target.layers)))
    for ours, theirs in zip(genome.layers, target.layers):
        if ours.kind is not theirs.kind:
            distance += 1.0
            continue
        if ours.kernel is None:
            continue
        for axis in (0, 1):
            distance += 0.1 * abs(ours.kernel[axis] - theirs.kernel[axis])
            distance += 0.05 * abs(ours.padding[axis] - theirs.padding[axis])
    return distance


class SurrogateLandscape:
    """Deterministic, training-free evaluator: loss = distance to a hidden target."""

    def __init__(self, target: Genome):
        self.target = target

    def evaluate(self, request: EvaluationRequest) -> EvaluationResult:
        loss = architecture_distance(request.genome, self.target)
        return EvaluationResult.ok(
            request.request_id,
            val_loss=loss,
            train_loss=loss,
            chosen_lr=geometric_mean_lr(request.lr_low, request.lr_high),
        )


class ConstantEvaluator:
    """Stub evaluator returning a fixed loss; useful for smoke tests and dry runs."""

    def __init__(self, loss: float = 0.5):
        self.loss = float(loss)

    def evaluate(self, request: EvaluationRequest) -> EvaluationResult:
        return EvaluationResult.ok(
            request.request_id,
            val_loss=self.loss,
            train_loss=self.loss,
            chosen_lr=geometric_mean_lr(request.lr_low, request.lr_high),
        )


class CachingEvaluator:
    """Memoizes an inner evaluator by genome fingerprint.

    Fingerprints cover weight seeds, so weight-reset mutations always reach
    the inner evaluator. Hit/miss counters are exported for telemetry.
    """

    def __init__(self, inner: Evaluator, key_fn: Callable[[Any], str] = genome_fingerprint, enabled: bool = True):
        self.inner = inner
        self.key_fn = key_fn
        self.enabled = enabled
        self.hits = 0
        self.misses = 0
        self._results: dict[str, EvaluationResult] = {}
        self._lock = threading.Lock()

    def evaluate(self, request: EvaluationRequest) -> EvaluationResult:
        if not self.enabled:
            return self.inner.evaluate(request)
        key = self.key_fn(request.genome)
        with self._lock:
            cached = self._results.get(key)
            if cached is not None:
                self.hits += 1
                return replace(cached, request_id=request.request_id)
            self.misses += 1
        result = self.inner.evaluate(request)
        with self._lock:
            self._results[key] = result
        return result

    def stats(self) -> dict:
        return {"cache_hits": self.hits, "cache_misses": self.misses}


class SpawnFailed(RuntimeError):
    """Worker process could not be launched or did not complete the handshake."""


class ProtocolError(ValueError):
    """A wire message violated the evaluation protocol."""


def request_to_wire(request: EvaluationRequest, serialize=genome_to_record) -> str:
    message = {
        "type": "eval",
        "request_id": request.request_id,
        "genome": serialize(request.genome),
        "lr_low": request.lr_low,
        "lr_high": request.lr_high,
    }
    if request.budget is not None:
        message["budget"] = {"max_epochs": request.budget.max_epochs, "patience": request.budget.patience}
    return json.dumps(message, sort_keys=True)


def result_from_wire(line: str) -> EvaluationResult:
    try:
        message = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"response is not valid JSON: {line!r}") from exc
    if not isinstance(message, dict) or message.get("type") != "result":
        raise ProtocolError(f"expected a result message, got {line!r}")
    try:
        status = EvalStatus(message["status"])
        request_id = int(message["request_id"])
    except (KeyError, ValueError, TypeError) as exc:
        raise ProtocolError(f"malformed result message: {line!r}") from exc
    if status is not EvalStatus.OK:
        return EvaluationResult(request_id, status)
    try:
        return EvaluationResult(
            request_id=request_id,
            status=status,
            val_loss=float(message["val_loss"]),
            train_loss=float(message.get("train_loss", 0.0)),
            chosen_lr=float(message["chosen_lr"]),
            wall_seconds=float(message.get("wall_seconds", 0.0)),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ProtocolError(f"ok result missing fields: {line!r}") from exc


class _Worker:
    """One child process with a reader thread; at most one request in flight."""

    def __init__(self, command: list[str], startup_timeout: float):
        try:
            self.proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise SpawnFailed(f"cannot launch {command!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        hello = self._next_line(startup_timeout)
        if hello is None:
            self.kill()
            raise SpawnFailed(f"worker {command!r} exited or stalled before the handshake")
        try:
            message = json.loads(hello)
        except json.JSONDecodeError:
            self.kill()
            raise SpawnFailed(f"worker handshake is not JSON: {hello!r}") from None
        if message.get("type") != "hello" or message.get("protocol_version") != PROTOCOL_VERSION:
            self.kill()
            raise SpawnFailed(f"protocol version mismatch in handshake: {hello!r}")

    def _pump(self):
        assert self.proc.stdout is not None
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _next_line(self, timeout: float) -> str | None:
        try:
            return self._lines.get(timeout=timeout)
        except queue.Empty:
            return None

    def request(self, line: str, timeout: float) -> str | None:
        """Send one request line; returns the response line, or None on timeout/death."""
        assert self.proc.stdin is not None
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            return None
        return self._next_line(timeout)

    def kill(self):
        try:
            self.proc.kill()
            self.proc.wait(timeout=5)
        except Exception:
            pass


class ExternalProcessEvaluator:
    """Evaluator backed by a pool of trainer subprocesses.

    Each worker speaks the line protocol over its standard streams and serves
    one request at a time; timeouts, deaths, and malformed responses yield
    TrainFailed and a worker restart so the search loop stays total.
    """

    def __init__(
        self,
        command: list[str],
        timeout: float = 300.0,
        workers: int = 1,
        budget: EvalBudget | None = None,
        serialize=genome_to_record,
        startup_timeout: float = 60.0,
    ):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.command = list(command)
        self.timeout = timeout
        self.budget = budget
        self.serialize = serialize
        self.startup_timeout = startup_timeout
        self._idle: queue.Queue[_Worker] = queue.Queue()
        for _ in range(workers):
            self._idle.put(self._spawn())

    def _spawn(self) -> _Worker:
        return _Worker(self.command, self.startup_timeout)

    def evaluate(self, request: EvaluationRequest) -> EvaluationResult:
        if request.budget is None and self.budget is not None:
            request = replace(request, budget=self.budget)
        worker = self._idle.get()
        try:
            line = worker.request(request_to_wire(request, self.serialize), self.timeout)
            if line is None:
                log.warning("worker timed out or died on request %d; restarting", request.request_id)
                worker.kill()
                worker = self._spawn()
                return EvaluationResult.failed(request.request_id)
            try:
                result = result_from_wire(line)
            except ProtocolError as exc:
                log.warning("protocol error on request %d: %s; restarting worker", request.request_id, exc)
                worker.kill()
                worker = self._spawn()
                return EvaluationResult.failed(request.request_id)
            if result.request_id != request.request_id:
                log.warning(
                    "response id %d does not match request %d; restarting worker",
                    result.request_id,
                    request.request_id,
                )
                worker.kill()
                worker = self._spawn()
                return EvaluationResult.failed(request.request_id)
            return result
        finally:
            self._idle.put(worker)

    def close(self):
        while True:
            try:
                self._idle.get_nowait().kill()
            except queue.Empty:
                break

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
