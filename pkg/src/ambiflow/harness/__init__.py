"""CLI, configuration, dataset I/O, synthetic worlds, and reporting."""

from .config import (
    DEFAULTS,
    ConfigError,
    config_hash,
    feature_config,
    flow_config,
    format_config,
    load_config_file,
    loss_weights,
    parse_value,
    plausibility_config,
    resolve_config,
    train_config,
)
from .dataset import (
    DATASET_FORMAT,
    JOINT2D_SENTINEL,
    DataError,
    FrameRecord,
    read_dataset,
    to_training_samples,
    write_dataset,
)
from .synth import ArticulationSampler, build_world_assets, make_cameras, synth_records

__all__ = [
    "ConfigError",
    "DEFAULTS",
    "parse_value",
    "load_config_file",
    "resolve_config",
    "format_config",
    "config_hash",
    "flow_config",
    "feature_config",
    "train_config",
    "loss_weights",
    "plausibility_config",
    "DataError",
    "DATASET_FORMAT",
    "JOINT2D_SENTINEL",
    "FrameRecord",
    "read_dataset",
    "write_dataset",
    "to_training_samples",
    "ArticulationSampler",
    "build_world_assets",
    "make_cameras",
    "synth_records",
]
