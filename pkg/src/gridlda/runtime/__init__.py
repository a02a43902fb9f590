"""Cluster runtime: configuration, scheduling, transports, workers,
coordinator, checkpoints, and the pipeline benchmark."""

from .config import ClusterTopology, PipelineConfig, TrainConfig, parse_config_file
from .coordinator import (
    IterationReport,
    SequentialTrainer,
    Trainer,
    WorkerFailure,
    partition_documents,
)
from .checkpoint import (
    CheckpointData,
    CheckpointError,
    ChecksumError,
    TopologyMismatchError,
    load_checkpoint,
    save_checkpoint,
)
from .schedule import FreeServerScheduler, schedule_diagonals

__all__ = [
    "ClusterTopology",
    "PipelineConfig",
    "TrainConfig",
    "parse_config_file",
    "Trainer",
    "SequentialTrainer",
    "IterationReport",
    "WorkerFailure",
    "partition_documents",
    "CheckpointData",
    "CheckpointError",
    "ChecksumError",
    "TopologyMismatchError",
    "load_checkpoint",
    "save_checkpoint",
    "FreeServerScheduler",
    "schedule_diagonals",
]
