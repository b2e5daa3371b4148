"""Mini-batch training, head-only retraining and run averaging."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..dataset import Manifest
from ..imageops import AugmentationPolicy, augment_batch, load_image
from ..metrics import MetricsReport, average_reports
from .model import ReferenceCnn, cross_entropy, loss_and_gradients
from .optim import AdamState, adam_step


class TrainingError(RuntimeError):
    pass


class AggregationError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 10
    epochs: int = 50
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    freeze_conv: bool = False
    augmentation: AugmentationPolicy | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")


@dataclass
class LabeledImages:
    """A stack of same-sized images with integer labels into ``class_names``."""

    images: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    paths: tuple[str, ...] = ()

    def __post_init__(self):
        self.images = np.asarray(self.images)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or len(self.images) != len(self.labels):
            raise ValueError(f"images {self.images.shape} / labels {self.labels.shape} mismatch")

    def __len__(self):
        return len(self.labels)

    @classmethod
    def from_manifest(cls, manifest: Manifest, split: str | None, size: tuple[int, int]) -> LabeledImages:
        """Load every record of ``split`` (all records when None) at (height, width) ``size``."""
        recs = manifest.records if split is None else manifest.select(split)
        images = []
        for r in recs:
            try:
                images.append(load_image(r.path, size))
            except (OSError, ValueError) as exc:
                raise TrainingError(f"cannot load training image {r.path}: {exc}") from exc
        arr = np.stack(images) if images else np.zeros((0, size[0], size[1], 3))
        labels = [manifest.label_index(r.label) for r in recs]
        return cls(arr, np.array(labels, dtype=np.int64), manifest.classes,
                   tuple(r.path for r in recs))


@dataclass(frozen=True)
class EpochRecord:
    train_accuracy: float
    train_loss: float
    validation_accuracy: float
    validation_loss: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_acc", "train_loss", "val_acc", "val_loss"])
        for i, r in enumerate(self.records, start=1):
            w.writerow([i, repr(r.train_accuracy), repr(r.train_loss),
                        repr(r.validation_accuracy), repr(r.validation_loss)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> TrainingHistory:
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls([EpochRecord(float(r["train_acc"]), float(r["train_loss"]),
                                float(r["val_acc"]), float(r["val_loss"])) for r in rows])


def evaluate(model: ReferenceCnn, data: LabeledImages, batch_size: int = 64) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) of ``model`` on ``data``."""
    if len(data) == 0:
        return 0.0, 0.0
    probs = model.predict(data.images, batch_size=batch_size)
    acc = float(np.mean(np.argmax(probs, axis=1) == data.labels))
    return acc, cross_entropy(probs, data.labels)


def predict_labels(model: ReferenceCnn, images, batch_size: int = 64) -> np.ndarray:
    return np.argmax(model.predict(images, batch_size=batch_size), axis=1)


def train(model: ReferenceCnn, train_data: LabeledImages, val_data: LabeledImages | None,
          config: TrainConfig) -> tuple[ReferenceCnn, TrainingHistory]:
    """Train a copy of ``model`` with Adam; the input model is not modified.

    Each epoch shuffles with a generator seeded by ``config.seed``, walks
    mini-batches of ``batch_size`` (the last one may be short), then scores
    the whole training and validation sets. Training images are augmented
    per epoch when ``config.augmentation`` is set. Without ``val_data`` the
    validation columns repeat the training scores.
    """
    if len(train_data) == 0:
        raise TrainingError("training set is empty")
    model = model.copy()
    rng = np.random.default_rng(config.seed)
    state = AdamState()
    history = TrainingHistory()
    n = len(train_data)
    trainable = [name for name in model.params
                 if not (config.freeze_conv and name.startswith("conv"))]
    for epoch in range(config.epochs):
        images = train_data.images
        if config.augmentation is not None:
            images = np.stack(augment_batch(images, config.augmentation, epoch=epoch))
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            _, grads = loss_and_gradients(model, images[idx], train_data.labels[idx],
                                          freeze_conv=config.freeze_conv)
            adam_step(model.params, {k: grads[k] for k in trainable}, state,
                      config.learning_rate, config.beta1, config.beta2, config.eps)
        tr_acc, tr_loss = evaluate(model, train_data)
        va_acc, va_loss = evaluate(model, val_data) if val_data is not None else (tr_acc, tr_loss)
        history.records.append(EpochRecord(tr_acc, tr_loss, va_acc, va_loss))
    return model, history


def retrain_head(model: ReferenceCnn, train_data: LabeledImages, val_data: LabeledImages | None,
                 config: TrainConfig) -> tuple[ReferenceCnn, TrainingHistory]:
    """Keep the conv stack as a frozen feature extractor and fit a fresh softmax head.

    The head is reinitialized from ``config.seed``; training then runs with
    ``freeze_conv`` forced on.
    """
    fresh = model.copy()
    fresh.reinit_head(config.seed)
    return train(fresh, train_data, val_data, replace(config, freeze_conv=True))


def average_histories(histories: Sequence[TrainingHistory]) -> TrainingHistory:
    if not histories:
        raise AggregationError("no histories to average")
    lengths = {len(h) for h in histories}
    if len(lengths) != 1:
        raise AggregationError(f"histories have different epoch counts: {sorted(lengths)}")
    cols = ("train_accuracy", "train_loss", "validation_accuracy", "validation_loss")
    means = {c: np.mean([h.column(c) for h in histories], axis=0) for c in cols}
    return TrainingHistory([EpochRecord(*(float(means[c][i]) for c in cols))
                            for i in range(lengths.pop())])


def average_runs(histories: Sequence[TrainingHistory],
                 reports: Sequence[MetricsReport]) -> tuple[TrainingHistory, MetricsReport]:
    """Elementwise mean of repeated runs' histories and metric reports."""
    if len(histories) != len(reports):
        raise AggregationError(f"{len(histories)} histories but {len(reports)} reports")
    return average_histories(histories), average_reports(reports)
