"""Reference CNN classifier, training, transfer (head retraining) and grid search."""

from .model import (BlackBoxClassifier, LabelError, ReferenceCnn, ShapeError, cross_entropy,
                    feature_maps, forward, gradients, logits, loss_and_gradients, softmax)
from .optim import AdamState, NumericError, adam_step
from .search import GridSearchError, GridSpec, cell_seed, grid_search, results_to_csv
from .serialization import ModelFormatError, dumps, load_model, loads, save_model
from .training import (AggregationError, EpochRecord, LabeledImages, TrainConfig,
                       TrainingError, TrainingHistory, average_histories, average_runs,
                       evaluate, predict_labels, retrain_head, train)

__all__ = [
    "AdamState", "AggregationError", "BlackBoxClassifier", "EpochRecord", "GridSearchError",
    "GridSpec", "LabelError", "LabeledImages", "ModelFormatError", "NumericError", "ReferenceCnn",
    "ShapeError", "TrainConfig", "TrainingError", "TrainingHistory", "adam_step",
    "average_histories", "average_runs", "cell_seed", "cross_entropy", "dumps", "evaluate",
    "feature_maps", "forward", "gradients", "grid_search", "load_model", "loads", "logits",
    "loss_and_gradients", "predict_labels", "results_to_csv", "retrain_head", "save_model",
    "softmax", "train",
]
