"""Bee-colony architecture search over feedforward CNN genomes."""

__version__ = "0.1.0"

from .engine import (  # noqa: E402
    ArchitectureSpace,
    Candidate,
    EngineConfig,
    SearchState,
    fitness,
    initialize,
    run,
)
from .evaluator import (  # noqa: E402
    CachingEvaluator,
    ConstantEvaluator,
    EvaluationRequest,
    EvaluationResult,
    ExternalProcessEvaluator,
    SurrogateLandscape,
)
from .genome import (  # noqa: E402
    Genome,
    LayerKind,
    LayerSpec,
    SearchBounds,
    genome_fingerprint,
    genome_from_record,
    genome_to_record,
    infer_shapes,
    random_genome,
)
from .mutation import MutationConfig, MutationKind, mutate  # noqa: E402
from .repair import is_congruent, repair  # noqa: E402

__all__ = [
    "ArchitectureSpace",
    "CachingEvaluator",
    "Candidate",
    "ConstantEvaluator",
    "EngineConfig",
    "EvaluationRequest",
    "EvaluationResult",
    "ExternalProcessEvaluator",
    "Genome",
    "LayerKind",
    "LayerSpec",
    "MutationConfig",
    "MutationKind",
    "SearchBounds",
    "SearchState",
    "SurrogateLandscape",
    "fitness",
    "genome_fingerprint",
    "genome_from_record",
    "genome_to_record",
    "infer_shapes",
    "initialize",
    "is_congruent",
    "mutate",
    "random_genome",
    "repair",
    "run",
]
