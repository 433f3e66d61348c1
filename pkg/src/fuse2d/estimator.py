"""scikit-learn compatible wrappers.

``SignalImageEncoder`` turns windows into fused images and
``FusedImageClassifier`` trains the CNN on them, so both can sit in a
``sklearn.pipeline.Pipeline`` and be cloned or grid-searched.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .cnn.model import PROFILES, architecture, init_model, predict_proba
from .cnn.optim import freeze_features
from .cnn.serialize import load_model, save_model
from .cnn.train import Dataset, TrainConfig, fit_two_stage, scale_images, train_stage
from .colorize import SCHEMES, UPSCALE, colorize, upscale_nearest
from .dataset import fit_to_input
from .fusion import Arrangement, BandLayout, Window, assemble_matrix, normalize_window
from .ingest import Label

DEFAULT_LENGTHS = (320, 20, 160)  # PPG, EDA, ACC samples in a 5 s window


def windows_to_array(windows) -> np.ndarray:
    """Stack windows as rows of ``[ppg | eda | acc]`` samples."""
    return np.stack([np.concatenate([w.ppg, w.eda, w.acc]) for w in windows])


class SignalImageEncoder(TransformerMixin, BaseEstimator):
    """Windows -> uint8 fused images of shape (n, side*upscale, side*upscale, 3).

    Accepts a list of :class:`~fuse2d.fusion.Window` or a 2-D array whose
    rows are ``[ppg | eda | acc]`` samples of lengths ``channel_lengths``.
    Stateless; ``fit`` only validates.
    """

    def __init__(self, arrangement="EAP", scheme="custom", repetition=None, fill="zeros",
                 upscale=UPSCALE, channel_lengths=DEFAULT_LENGTHS):
        self.arrangement = arrangement
        self.scheme = scheme
        self.repetition = repetition
        self.fill = fill
        self.upscale = upscale
        self.channel_lengths = channel_lengths

    def _layout(self):
        return BandLayout(repetition=dict(self.repetition or {"P": 1, "E": 8, "A": 1}), fill=self.fill)

    def _windows(self, X):
        if len(X) and isinstance(X[0], Window):
            return list(X)
        X = check_array(X, dtype=np.float64)
        n_p, n_e, n_a = self.channel_lengths
        if X.shape[1] != n_p + n_e + n_a:
            raise ValueError(f"expected {n_p + n_e + n_a} samples per row, got {X.shape[1]}")
        return [Window("", 0, Label.IGNORE, row[:n_p], row[n_p:n_p + n_e], row[n_p + n_e:]) for row in X]

    def fit(self, X, y=None):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        Arrangement.from_name(self.arrangement)
        self._layout()
        self._windows(X)
        return self

    def transform(self, X):
        arr = Arrangement.from_name(self.arrangement)
        layout = self._layout()
        out = []
        for w in self._windows(X):
            m = assemble_matrix(normalize_window(w), arr, layout)
            out.append(upscale_nearest(colorize(m, self.scheme), self.upscale, side=layout.side))
        return np.stack(out)


class FusedImageClassifier(ClassifierMixin, BaseEstimator):
    """Binary CNN over fused images (class 0 = no-stress, 1 = stress).

    ``fit`` runs stage 1; passing ``stage2`` (a list of ``(X, y)`` or
    ``(X, y, sample_weight)`` tuples) adds the frozen-feature finetuning
    stage. Images may be uint8 or floats in [0, 1]; larger renderings are
    block-sampled down to the profile's input side.
    """

    def __init__(self, profile="tiny", learning_rate=0.001, batch_size=64, epochs=16,
                 beta1=0.9, beta2=0.999, epsilon=1e-8, shuffle=True, random_state=0,
                 pool_after_first=True, stage2_epochs=None, stage2_include_stage1=True,
                 chunk_size=None):
        self.profile = profile
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.shuffle = shuffle
        self.random_state = random_state
        self.pool_after_first = pool_after_first
        self.stage2_epochs = stage2_epochs
        self.stage2_include_stage1 = stage2_include_stage1
        self.chunk_size = chunk_size

    def _config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, batch_size=self.batch_size, epochs=self.epochs,
            beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon, shuffle=self.shuffle,
            seed=int(self.random_state or 0), profile=self.profile,
            pool_after_first=self.pool_after_first, stage2_epochs=self.stage2_epochs,
            stage2_include_stage1=self.stage2_include_stage1, chunk_size=self.chunk_size,
        )

    def _side(self):
        if hasattr(self, "model_"):
            return self.model_.input_shape[0]
        return PROFILES[self.profile][0]

    def _images(self, X):
        X = np.asarray(X)
        X = check_array(X.reshape(len(X), -1), dtype=None).reshape(X.shape)
        if X.ndim != 4 or X.shape[-1] != 3:
            raise ValueError(f"expected images of shape (n, H, W, 3), got {X.shape}")
        return fit_to_input(X, self._side())

    def _dataset(self, X, y, sample_weight=None):
        y = np.asarray(y)
        if y.ndim != 1:
            raise ValueError("y must be 1-d")
        return Dataset(self._images(X), y.astype(int), sample_weight)

    def fit(self, X, y, sample_weight=None, stage2=None, validation=None):
        stage1 = self._dataset(X, y, sample_weight)
        s2 = [self._dataset(*part) for part in stage2] if stage2 else None
        val = self._dataset(*validation) if validation is not None else None
        self.model_, self.history_ = fit_two_stage(stage1, s2, self._config(), validation=val)
        self.classes_ = np.array([0, 1])
        return self

    def finetune(self, X, y, sample_weight=None):
        """Freeze the conv stack of a fitted model and train the dense head."""
        check_is_fitted(self, "model_")
        cfg = self._config()
        freeze_features(self.model_)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(3)[2])
        train_stage(self.model_, self._dataset(X, y, sample_weight), cfg, rng, stage=2,
                    epochs=cfg.stage2_epochs, history=self.history_)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return predict_proba(self.model_, scale_images(self._images(X), self.model_.dtype))

    def predict(self, X):
        # argmax returns the first maximum, so ties resolve to class 0
        return np.argmax(self.predict_proba(X), axis=1)

    def save(self, path):
        check_is_fitted(self, "model_")
        save_model(self.model_, path)

    @classmethod
    def from_file(cls, path, **params):
        model = load_model(path)
        est = cls(**params)
        est.model_ = model
        est.history_ = []
        est.classes_ = np.array([0, 1])
        return est

    def init_untrained(self):
        """Attach a freshly initialized (untrained) model; handy for inspection."""
        specs, shape = architecture(self.profile, self.pool_after_first)
        seed = int(np.random.SeedSequence(int(self.random_state or 0)).spawn(2)[0].generate_state(1)[0])
        self.model_ = init_model(specs, shape, seed)
        self.history_ = []
        self.classes_ = np.array([0, 1])
        return self
