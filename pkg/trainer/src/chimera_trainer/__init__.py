"""Reference external trainer speaking the chimera evaluation wire protocol."""

__version__ = "0.1.0"

from .genome_schema import GenomeRecord, InvalidGenome, parse_genome
from .lr_finder import lr_range_test
from .network import build_network, feature_shapes
from .training import TrainJob, TrainingDiverged, train_and_validate

__all__ = [
    "GenomeRecord",
    "InvalidGenome",
    "TrainJob",
    "TrainingDiverged",
    "build_network",
    "feature_shapes",
    "lr_range_test",
    "parse_genome",
    "train_and_validate",
]
