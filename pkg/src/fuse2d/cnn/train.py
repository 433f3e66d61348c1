"""Mini-batch training, including the two-stage freeze/finetune schedule."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import Model, NonFiniteError, architecture, init_model, loss_and_gradients, predict
from .optim import adam_step, freeze_features

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 64
    epochs: int = 16
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    shuffle: bool = True
    seed: int = 0
    profile: str = "full"
    pool_after_first: bool = True
    stage2_epochs: int | None = None
    stage2_include_stage1: bool = True
    chunk_size: int | None = None  # split batches for memory; gradients unchanged

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning_rate, batch_size and epochs must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.epsilon <= 0:
            raise ValueError("invalid Adam hyper-parameters")


@dataclass
class Dataset:
    """Images (N, H, W, 3) as uint8 or floats in [0, 1], integer labels, weights."""

    images: np.ndarray
    labels: np.ndarray
    weights: np.ndarray | None = None
    subjects: Sequence[str] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.images = np.asarray(self.images)
        self.labels = np.asarray(self.labels, dtype=int)
        if len(self.images) == 0:
            raise ValueError("empty dataset")
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")
        if np.any((self.labels != 0) & (self.labels != 1)):
            raise ValueError("labels must be 0 or 1")
        if self.weights is None:
            self.weights = np.ones(len(self.labels))
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != self.labels.shape or np.any(self.weights < 0):
            raise ValueError("weights must be non-negative, one per example")

    def __len__(self):
        return len(self.labels)

    @staticmethod
    def concat(parts: Sequence["Dataset"]) -> "Dataset":
        return Dataset(
            np.concatenate([p.images for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.weights for p in parts]),
        )


@dataclass
class EpochRecord:
    epoch: int
    stage: int
    loss: float
    train_acc: float
    val_acc: float | None = None


def scale_images(images, dtype=np.float32) -> np.ndarray:
    images = np.asarray(images)
    if images.dtype == np.uint8:
        return images.astype(dtype) / np.asarray(255, dtype=dtype)
    return images.astype(dtype, copy=False)


def accuracy_on(model: Model, data: Dataset) -> float:
    pred, _ = predict(model, scale_images(data.images, model.dtype))
    return float(np.mean(pred == data.labels))


def train_stage(model: Model, data: Dataset, cfg: TrainConfig, rng: np.random.Generator,
                stage: int = 1, epochs: int | None = None, validation: Dataset | None = None,
                history: list | None = None) -> list:
    """Run ``epochs`` epochs of shuffled mini-batch Adam on ``data``."""
    history = [] if history is None else history
    n = len(data)
    for epoch in range(1, (epochs or cfg.epochs) + 1):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        loss_sum = w_sum = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            w = data.weights[idx]
            if w.sum() == 0:
                continue
            x = scale_images(data.images[idx], model.dtype)
            loss, grads, _ = loss_and_gradients(model, x, data.labels[idx], w, cfg.chunk_size)
            if not np.isfinite(loss):
                raise NonFiniteError(f"loss diverged in stage {stage}, epoch {epoch}")
            adam_step(model, grads, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
            loss_sum += loss * w.sum()
            w_sum += w.sum()
        rec = EpochRecord(
            epoch=epoch, stage=stage,
            loss=loss_sum / w_sum if w_sum else float("nan"),
            train_acc=accuracy_on(model, data),
            val_acc=accuracy_on(model, validation) if validation is not None else None,
        )
        logger.info("stage %d epoch %d loss %.4f train_acc %.4f", stage, epoch, rec.loss, rec.train_acc)
        history.append(rec)
    return history


def fit_two_stage(stage1: Dataset, stage2: Sequence[Dataset] | None = None,
                  cfg: TrainConfig | None = None, validation: Dataset | None = None,
                  model: Model | None = None):
    """Train on ``stage1``, then optionally freeze features and finetune.

    Stage 2 trains only the dense layers on the union of ``stage2``
    datasets (plus ``stage1`` when ``cfg.stage2_include_stage1``), each
    example carrying its own weight. Without ``stage2`` this is ordinary
    single-stage training. Returns ``(model, history)``.
    """
    cfg = cfg or TrainConfig()
    init_seq, shuffle_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(shuffle_seq)
    if model is None:
        specs, shape = architecture(cfg.profile, cfg.pool_after_first)
        model = init_model(specs, shape, int(init_seq.generate_state(1)[0]))

    history = train_stage(model, stage1, cfg, rng, stage=1, validation=validation)
    if stage2:
        freeze_features(model)
        parts = ([stage1] if cfg.stage2_include_stage1 else []) + list(stage2)
        history = train_stage(model, Dataset.concat(parts), cfg, rng, stage=2,
                              epochs=cfg.stage2_epochs, validation=validation, history=history)
    return model, history


def write_history(history: Sequence[EpochRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "stage", "loss", "train_acc", "val_acc"])
        for r in history:
            w.writerow([r.epoch, r.stage, repr(float(r.loss)), repr(float(r.train_acc)),
                        "" if r.val_acc is None else repr(float(r.val_acc))])
