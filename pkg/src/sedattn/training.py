"""Per-clip (batch size 1) Adam training loop with best-validation
checkpoint selection.

Deterministic given the seed: the clip order is reshuffled each epoch from a
seeded stream, and every update is pure, so identical inputs reproduce the
parameter trajectory exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._validation import NumericError
from .metrics import event_metrics
from .model import SedModel, binarize, frames_to_events
from .numerics import AdamState, adam_step, seeded_rng

__all__ = ["TrainConfig", "TrainHistory", "train_model", "validation_event_f1"]

log = logging.getLogger("sedattn")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    lr: float = 0.001
    decay: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    collar: float = 0.25
    frame_rate: float = 50.0
    select_metric: str = "event_f1"  # best-checkpoint criterion

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.select_metric not in ("event_f1", "segment_f1"):
            raise ValueError("select_metric must be event_f1 or segment_f1")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_f1: list[float] = field(default_factory=list)  # percent, empty without val data
    best_epoch: int = -1
    best_val_f1: float = float("nan")


def validation_event_f1(model: SedModel, data, cfg: TrainConfig) -> float:
    """Micro event F1 (percent) of the model on (X, Y) pairs; reference
    events are decoded from the target rolls at the training frame rate."""
    refs, preds = [], []
    for X, Y in data:
        refs.append(frames_to_events(Y, cfg.frame_rate))
        preds.append(model.predict_events(X, cfg.frame_rate))
    return event_metrics(refs, preds, collar=cfg.collar).f1


def _validation_segment_f1(model: SedModel, data, cfg: TrainConfig) -> float:
    # 1 s segments at the training frame rate, from frame rolls directly
    seg = max(1, round(cfg.frame_rate))
    tp = fp = fn = 0
    for X, Y in data:
        pred = model.predict_binary(X)
        T = Y.shape[0]
        n_seg = int(np.ceil(T / seg))
        pad = n_seg * seg - T
        ref_r = np.pad(Y, ((0, pad), (0, 0))).reshape(n_seg, seg, -1).any(axis=1)
        prd_r = np.pad(pred, ((0, pad), (0, 0))).reshape(n_seg, seg, -1).any(axis=1)
        tp += int((ref_r & prd_r).sum())
        fp += int((prd_r & ~ref_r).sum())
        fn += int((ref_r & ~prd_r).sum())
    denom = 2 * tp + fp + fn
    return 100.0 * 2 * tp / denom if denom else 0.0


def train_model(model: SedModel, train_data, val_data=None,
                cfg: TrainConfig = TrainConfig()) -> TrainHistory:
    """Train in place; with validation data the parameters are reset to the
    best-scoring epoch's snapshot before returning.

    ``train_data``/``val_data``: sequences of (features T x F, targets
    T x C) pairs. Raises NumericError if the loss goes non-finite.
    """
    train_data = list(train_data)
    if not train_data:
        raise ValueError("training set must not be empty")
    val_data = list(val_data) if val_data else None

    states = {name: AdamState.zeros_like(p) for name, p in model.params.items()}
    history = TrainHistory()
    best_params = None
    score_fn = validation_event_f1 if cfg.select_metric == "event_f1" else _validation_segment_f1

    for epoch in range(cfg.epochs):
        order = seeded_rng(cfg.seed, "shuffle", epoch).permutation(len(train_data))
        total = 0.0
        for idx in order:
            X, Y = train_data[idx]
            loss, grads = model.loss_and_grads(X, Y)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch}, clip {int(idx)}")
            total += loss
            for name, g in grads.items():
                model.params[name], states[name] = adam_step(
                    model.params[name], g, states[name], lr=cfg.lr,
                    beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps, decay=cfg.decay)
        history.train_loss.append(total / len(train_data))

        if val_data is not None:
            f1 = score_fn(model, val_data, cfg)
            history.val_f1.append(f1)
            if best_params is None or f1 > history.best_val_f1:
                history.best_val_f1 = f1
                history.best_epoch = epoch
                best_params = model.copy_params()
            log.debug("epoch %d: loss %.5f, val %s %.2f%%",
                      epoch, history.train_loss[-1], cfg.select_metric, f1)
        else:
            log.debug("epoch %d: loss %.5f", epoch, history.train_loss[-1])

    if best_params is not None:
        model.params = best_params
    else:
        history.best_epoch = cfg.epochs - 1
    return history
