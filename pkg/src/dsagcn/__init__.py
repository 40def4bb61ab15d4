"""Cross-domain bearing fault diagnosis with graph features and subdomain alignment."""

from . import adversarial, data, diffcore, graph, losses, models, training
from .data import DatasetManifest, SplitSpec, SynthConfig, load_manifest, make_splits
from .models import VARIANTS, build_model, load_model
from .training import TrainConfig, TransferTask, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "adversarial", "data", "diffcore", "graph", "losses", "models", "training",
    "DatasetManifest", "SplitSpec", "SynthConfig", "load_manifest", "make_splits",
    "VARIANTS", "build_model", "load_model",
    "TrainConfig", "TransferTask", "evaluate", "train",
]
