"""scikit-learn style estimator facade over the SED model.

``SedDetector`` follows the sklearn contract (hyperparameters stored
verbatim in ``__init__``, ``get_params`` / ``set_params`` / ``clone``
compatible, ``fit`` returns self), so it composes with pipelines and model
selection utilities. Clips are variable-length sequences, so X is a list of
(T_i, F) float arrays and y a list of (T_i, C) binary frame-activity rolls,
mirroring the convention of sequence estimators like sklearn-crfsuite.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .metrics import event_metrics
from .model import ModelConfig, SedModel, binarize, frames_to_events
from .training import TrainConfig, train_model

__all__ = ["SedDetector"]


def _as_clip_list(X, name: str) -> list[np.ndarray]:
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = [X]
    clips = []
    for i, clip in enumerate(X):
        arr = np.ascontiguousarray(clip, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"{name}[{i}] must be a 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name}[{i}] contains non-finite values")
        clips.append(arr)
    if not clips:
        raise ValueError(f"{name} must contain at least one clip")
    return clips


class SedDetector(BaseEstimator):
    """Frame-wise polyphonic sound event detector.

    Parameters mirror the underlying model and trainer: ``attention``
    selects the variant ("none", "global", "windowed", "multihead"),
    ``width`` the attention window in frames for the windowed variant, and
    ``n_heads``/``first_width``/``width_step`` the multi-head width bank.
    """

    def __init__(self, attention="windowed", width=50, score_kind="additive",
                 hidden_dim=32, attn_dim=None, n_heads=11, first_width=2,
                 width_step=5, threshold=0.5, epochs=10, lr=0.001, decay=1e-6,
                 frame_rate=50.0, collar=0.25, select_metric="event_f1",
                 init_std=0.05, seed=0):
        self.attention = attention
        self.width = width
        self.score_kind = score_kind
        self.hidden_dim = hidden_dim
        self.attn_dim = attn_dim
        self.n_heads = n_heads
        self.first_width = first_width
        self.width_step = width_step
        self.threshold = threshold
        self.epochs = epochs
        self.lr = lr
        self.decay = decay
        self.frame_rate = frame_rate
        self.collar = collar
        self.select_metric = select_metric
        self.init_std = init_std
        self.seed = seed

    # -- sklearn plumbing ----------------------------------------------------

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("this SedDetector instance is not fitted yet")

    def _model_config(self, n_features: int, n_classes: int) -> ModelConfig:
        return ModelConfig(
            n_features=n_features, hidden_dim=self.hidden_dim, n_classes=n_classes,
            attention=self.attention, width=self.width, score_kind=self.score_kind,
            attn_dim=self.attn_dim, n_heads=self.n_heads, first_width=self.first_width,
            width_step=self.width_step, threshold=self.threshold,
            init_std=self.init_std, seed=self.seed)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, lr=self.lr, decay=self.decay,
                           seed=self.seed, collar=self.collar,
                           frame_rate=self.frame_rate,
                           select_metric=self.select_metric)

    # -- estimator API ---------------------------------------------------------

    def fit(self, X, y, X_val=None, y_val=None):
        """Fit on clips X (list of T x F arrays) and frame rolls y (list of
        matching T x C binary arrays). Optional validation clips select the
        best epoch checkpoint."""
        X = _as_clip_list(X, "X")
        y = [np.ascontiguousarray(t, dtype=np.float64) for t in
             ([y] if isinstance(y, np.ndarray) and y.ndim == 2 else y)]
        if len(X) != len(y):
            raise ValueError(f"got {len(X)} clips but {len(y)} target rolls")
        n_classes = y[0].shape[1] if y[0].ndim == 2 else 0
        for i, (clip, roll) in enumerate(zip(X, y)):
            if roll.ndim != 2 or roll.shape != (clip.shape[0], n_classes):
                raise ValueError(
                    f"y[{i}] must have shape {(clip.shape[0], n_classes)}, got {roll.shape}")
            if not np.isin(roll, (0.0, 1.0)).all():
                raise ValueError(f"y[{i}] must be binary")
        n_features = X[0].shape[1]
        for i, clip in enumerate(X):
            if clip.shape[1] != n_features:
                raise ValueError(f"X[{i}] has {clip.shape[1]} features, expected {n_features}")

        val = None
        if X_val is not None:
            X_val = _as_clip_list(X_val, "X_val")
            if y_val is None or len(X_val) != len(y_val):
                raise ValueError("X_val and y_val must be provided together, same length")
            val = list(zip(X_val, [np.asarray(t, dtype=np.float64) for t in y_val]))

        self.model_ = SedModel(self._model_config(n_features, n_classes))
        self.history_ = train_model(self.model_, list(zip(X, y)), val, self._train_config())
        self.n_features_in_ = n_features
        self.n_classes_ = n_classes
        return self

    def predict_proba(self, X) -> list[np.ndarray]:
        """Per-clip posteriograms (T x C probability matrices)."""
        self._require_fitted()
        return [self.model_.predict_proba(clip) for clip in _as_clip_list(X, "X")]

    def predict(self, X) -> list[np.ndarray]:
        """Per-clip binary frame-activity rolls at the fitted threshold."""
        self._require_fitted()
        return [binarize(p, self.threshold) for p in self.predict_proba(X)]

    def predict_events(self, X, classes=None):
        """Per-clip event lists decoded from the binarized posteriogram."""
        self._require_fitted()
        return [frames_to_events(b, self.frame_rate, classes) for b in self.predict(X)]

    def score(self, X, y) -> float:
        """Micro-averaged event F1 (0..1) against reference frame rolls."""
        self._require_fitted()
        X = _as_clip_list(X, "X")
        refs = [frames_to_events(np.asarray(t, float), self.frame_rate) for t in y]
        preds = [frames_to_events(b, self.frame_rate) for b in self.predict(X)]
        return event_metrics(refs, preds, collar=self.collar).f1 / 100.0

    def attention_weights(self, clip):
        """Attention weights for one clip (None for the baseline variant)."""
        self._require_fitted()
        clip = np.ascontiguousarray(clip, dtype=np.float64)
        _, attn = self.model_.forward(clip, want_attention=True)
        return attn
