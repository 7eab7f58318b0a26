"""ADNet: a numpy convolutional network for billboard detection in frames."""
from .dataset import (
    AnnotatedImage,
    DatasetManifest,
    ImageFolderLoader,
    SampleRecord,
    area_fraction,
    build_manifest,
    classify_sample,
    load_input,
    polygon_area,
)
from .eval import ConfusionMatrix, accuracy, evaluate, predict
from .network import (
    CONFIG_NAMES,
    Checkpoint,
    Network,
    NetworkSpec,
    build_config,
    freeze_prefix,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .training import TrainingConfig, TrainingLog, sgd_step, train

__version__ = "0.1.0"
