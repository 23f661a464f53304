"""App-usage prediction from semantic context and recent-app history.

The package ingests timestamped app-usage logs, trains a dual-embedding
network over semantic chunks and app history, and evaluates ranked app-set
predictions with MRR@k / HR@k against a recency baseline.
"""

from .corpus import (
    Event,
    SplitCorpus,
    Vocabulary,
    WindowInstance,
    apply_filters,
    build_vocabularies,
    chronological_split,
    ingest,
    load_bundle,
    save_bundle,
    windowize,
)
from .errors import (
    AllInstancesSkippedError,
    CheckpointError,
    CorruptCheckpointError,
    CosemError,
    DivergenceError,
    EmptyCorpusError,
    EmptyTrainSetError,
    ParseError,
    ShapeMismatchError,
    UsageError,
    VersionMismatchError,
)
from .estimator import CosemPredictor, MruBaseline, RandomRanker, check_instances
from .evaluation import EvalReport, evaluate, format_table, hit, mru_baseline, reciprocal_rank
from .model import ModelConfig, ModelParams, forward, init_params, loss, predict_topk
from .synth import synthesize
from .training import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "AllInstancesSkippedError",
    "Checkpoint",
    "CheckpointError",
    "CorruptCheckpointError",
    "CosemError",
    "CosemPredictor",
    "DivergenceError",
    "EmptyCorpusError",
    "EmptyTrainSetError",
    "EvalReport",
    "Event",
    "ModelConfig",
    "ModelParams",
    "MruBaseline",
    "ParseError",
    "RandomRanker",
    "ShapeMismatchError",
    "SplitCorpus",
    "TrainConfig",
    "UsageError",
    "VersionMismatchError",
    "Vocabulary",
    "WindowInstance",
    "apply_filters",
    "build_vocabularies",
    "check_instances",
    "chronological_split",
    "evaluate",
    "format_table",
    "forward",
    "hit",
    "ingest",
    "init_params",
    "load_bundle",
    "load_checkpoint",
    "loss",
    "mru_baseline",
    "predict_topk",
    "reciprocal_rank",
    "save_bundle",
    "save_checkpoint",
    "synthesize",
    "train",
    "windowize",
    "__version__",
]
