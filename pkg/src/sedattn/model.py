"""Desk-scale sound event detection network.

Pipeline: learned linear frame encoder (F -> d), single GRU layer, optional
attention stage (none / global / windowed / width-banked multi-head), then a
per-frame dense layer with sigmoid giving the T x C posteriogram. All
gradients are hand-derived; the full pipeline is verified against central
finite differences in the test suite.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from ._validation import NumericError, as_matrix, ensure_finite
from .attention import (
    AttentionConfig,
    ScoreKind,
    ScoreParams,
    attend_global,
    attend_windowed,
    attention_backward,
    init_score_params,
)
from .gru import GruParams, gru_forward, gru_forward_backward, init_gru_params
from .metrics import EventAnnotation
from .multihead import (
    MultiHeadConfig,
    multihead_attend_cached,
    multihead_backward,
    width_bank,
)
from .numerics import init_normal

__all__ = [
    "ModelConfig",
    "SedModel",
    "bce_loss",
    "bce_grad_logits",
    "binarize",
    "frames_to_events",
    "save_model",
    "load_model",
    "ATTENTION_VARIANTS",
]

ATTENTION_VARIANTS = ("none", "global", "windowed", "multihead")

BCE_CLIP = 1e-7


@dataclass(frozen=True)
class ModelConfig:
    n_features: int = 40
    hidden_dim: int = 32
    n_classes: int = 10
    attention: str = "none"
    width: int = 50  # windowed variant only
    score_kind: str = "additive"
    attn_dim: int | None = None  # additive projection dim, defaults to hidden_dim
    n_heads: int = 11
    first_width: int = 2
    width_step: int = 5
    threshold: float = 0.5
    init_std: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if min(self.n_features, self.hidden_dim, self.n_classes) < 1:
            raise ValueError("n_features, hidden_dim and n_classes must all be >= 1")
        if not (0.0 < self.threshold < 1.0):
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.attention not in ATTENTION_VARIANTS:
            raise ValueError(f"attention must be one of {ATTENTION_VARIANTS}")
        ScoreKind(self.score_kind)  # validates

    @property
    def kind(self) -> ScoreKind:
        return ScoreKind(self.score_kind)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def bce_loss(P, Y) -> float:
    """Mean binary cross-entropy over all T*C cells, with probabilities
    clipped to [1e-7, 1 - 1e-7] before the logs."""
    P = as_matrix(P, "P")
    Y = as_matrix(Y, "Y")
    if P.shape != Y.shape:
        raise ValueError(f"P shape {P.shape} != Y shape {Y.shape}")
    Pc = np.clip(P, BCE_CLIP, 1.0 - BCE_CLIP)
    return float(-(Y * np.log(Pc) + (1.0 - Y) * np.log1p(-Pc)).mean())


def bce_grad_logits(P, Y) -> np.ndarray:
    """d(BCE mean)/d(logits) for P = sigmoid(logits): (P - Y) / N on cells
    where the clip is inactive, zero where P was clipped."""
    mask = (P > BCE_CLIP) & (P < 1.0 - BCE_CLIP)
    return np.where(mask, P - Y, 0.0) / P.size


def binarize(P, threshold: float = 0.5) -> np.ndarray:
    """Threshold a posteriogram to a binary matrix (1 where p >= threshold)."""
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return (np.asarray(P, dtype=np.float64) >= threshold).astype(np.float64)


def frames_to_events(B, frame_rate: float, classes=None) -> list[EventAnnotation]:
    """Decode a binary (T, C) matrix into events: per class, each maximal
    run of active frames becomes one event spanning
    [start / rate, (end + 1) / rate)."""
    if frame_rate <= 0:
        raise ValueError("frame rate must be > 0")
    B = np.asarray(B)
    if B.ndim != 2:
        raise ValueError("binary activity matrix must be 2-D")
    T, C = B.shape
    if classes is None:
        classes = [f"class_{c}" for c in range(C)]
    if len(classes) != C:
        raise ValueError(f"need {C} class names, got {len(classes)}")
    events: list[EventAnnotation] = []
    for c in range(C):
        col = (B[:, c] > 0).astype(np.int8)
        boundaries = np.diff(np.concatenate([[0], col, [0]]))
        starts = np.flatnonzero(boundaries == 1)
        ends = np.flatnonzero(boundaries == -1)
        for s, e in zip(starts, ends):
            events.append(EventAnnotation(
                label=classes[c], onset=s / frame_rate, offset=e / frame_rate))
    events.sort(key=lambda ev: (ev.onset, ev.offset, ev.label))
    return events


class SedModel:
    """Parameter container plus forward / forward-backward passes.

    Parameters live in a flat name -> float64 array dict so the optimizer,
    checkpointing, and the gradient checker can treat them uniformly.
    """

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None):
        self.config = config
        self.params = self._init_params(config) if params is None else params
        self._check_param_shapes()

    # -- construction -------------------------------------------------------

    @staticmethod
    def _init_params(cfg: ModelConfig) -> dict[str, np.ndarray]:
        d, F, C = cfg.hidden_dim, cfg.n_features, cfg.n_classes
        std, seed = cfg.init_std, cfg.seed
        params: dict[str, np.ndarray] = {
            "enc.W": init_normal((d, F), 0.0, std, seed, "enc.W"),
            "enc.b": np.zeros(d),
            "out.W": init_normal((C, d), 0.0, std, seed, "out.W"),
            "out.b": np.zeros(C),
        }
        gru = init_gru_params(d, d, seed=seed, std=std, tag="gru")
        for name in ("Wz", "Wr", "Wc", "Uz", "Ur", "Uc", "bz", "br", "bc"):
            params[f"gru.{name}"] = getattr(gru, name)
        if cfg.attention in ("global", "windowed", "multihead"):
            sp = init_score_params(cfg.kind, d, d_a=cfg.attn_dim, seed=seed, std=std, tag="attn")
            if sp.v is not None:
                params["attn.v"] = sp.v
            if sp.W is not None:
                params["attn.W"] = sp.W
        if cfg.attention == "multihead":
            params["attn.heads"] = np.ones(cfg.n_heads)
        return params

    def _check_param_shapes(self):
        reference = self._init_params(self.config)
        if set(reference) != set(self.params):
            raise ValueError(f"parameter names {sorted(self.params)} do not match "
                             f"config (expected {sorted(reference)})")
        for name, ref in reference.items():
            if self.params[name].shape != ref.shape:
                raise ValueError(f"parameter {name} has shape {self.params[name].shape}, "
                                 f"expected {ref.shape}")

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())

    def non_attention_params(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.params.items() if not k.startswith("attn.")}

    # -- internal views -----------------------------------------------------

    def _gru_params(self) -> GruParams:
        p = self.params
        return GruParams(Wz=p["gru.Wz"], Wr=p["gru.Wr"], Wc=p["gru.Wc"],
                         Uz=p["gru.Uz"], Ur=p["gru.Ur"], Uc=p["gru.Uc"],
                         bz=p["gru.bz"], br=p["gru.br"], bc=p["gru.bc"])

    def _score_params(self) -> ScoreParams:
        return ScoreParams(v=self.params.get("attn.v"), W=self.params.get("attn.W"))

    def _attention_config(self, width=None) -> AttentionConfig:
        cfg = self.config
        return AttentionConfig(kind=cfg.kind, width=width, d=cfg.hidden_dim,
                               d_a=cfg.attn_dim)

    def _multihead_config(self) -> MultiHeadConfig:
        cfg = self.config
        return MultiHeadConfig(
            widths=width_bank(cfg.n_heads, cfg.first_width, cfg.width_step),
            head_weights=self.params["attn.heads"],
            kind=cfg.kind,
            params=self._score_params(),
        )

    # -- passes --------------------------------------------------------------

    def forward(self, X, want_attention: bool = False):
        """Posteriogram (T, C) for features X (T, F); optionally also the
        attention weights (a single AttentionWeights, a per-head list for
        the multi-head variant, or None for the baseline)."""
        X = as_matrix(X, "X")
        cfg = self.config
        if X.shape[1] != cfg.n_features:
            raise ValueError(f"X has {X.shape[1]} features, model expects {cfg.n_features}")
        p = self.params
        Z = ensure_finite(X @ p["enc.W"].T + p["enc.b"], "encoder output")
        H = gru_forward(Z, self._gru_params())
        attn = None
        if cfg.attention == "none":
            Ht = H
        elif cfg.attention == "global":
            Ht, attn = attend_global(H, self._score_params(), cfg.kind)
        elif cfg.attention == "windowed":
            Ht, attn = attend_windowed(H, self._attention_config(cfg.width),
                                       self._score_params())
        else:
            Ht, attn, _ = multihead_attend_cached(H, self._multihead_config())
        logits = Ht @ p["out.W"].T + p["out.b"]
        P = _sigmoid(logits)
        if not np.all(np.isfinite(P)):
            raise NumericError("model forward produced non-finite posteriors")
        return (P, attn) if want_attention else (P, None)

    def loss_and_grads(self, X, Y):
        """BCE loss plus gradients for every parameter (one full
        forward/backward over a single clip)."""
        X = as_matrix(X, "X")
        Y = as_matrix(Y, "Y")
        cfg = self.config
        p = self.params
        if X.shape[1] != cfg.n_features:
            raise ValueError(f"X has {X.shape[1]} features, model expects {cfg.n_features}")
        if Y.shape != (X.shape[0], cfg.n_classes):
            raise ValueError(f"Y must have shape {(X.shape[0], cfg.n_classes)}, got {Y.shape}")

        Z = ensure_finite(X @ p["enc.W"].T + p["enc.b"], "encoder output")
        H, gru_back = gru_forward_backward(Z, self._gru_params())

        if cfg.attention == "none":
            Ht = H
        elif cfg.attention == "global":
            Ht, attn_w = attend_global(H, self._score_params(), cfg.kind)
        elif cfg.attention == "windowed":
            attn_cfg = self._attention_config(cfg.width)
            Ht, attn_w = attend_windowed(H, attn_cfg, self._score_params())
        else:
            mh_cfg = self._multihead_config()
            Ht, per_head, head_outs = multihead_attend_cached(H, mh_cfg)

        logits = Ht @ p["out.W"].T + p["out.b"]
        P = _sigmoid(logits)
        loss = bce_loss(P, Y)

        dlogits = bce_grad_logits(P, Y)
        grads: dict[str, np.ndarray] = {
            "out.W": dlogits.T @ Ht,
            "out.b": dlogits.sum(axis=0),
        }
        dHt = dlogits @ p["out.W"]

        if cfg.attention == "none":
            dH = dHt
        elif cfg.attention == "global":
            dH, gp = attention_backward(H, self._attention_config(None),
                                        self._score_params(), attn_w, dHt)
            _store_score_grads(grads, gp)
        elif cfg.attention == "windowed":
            dH, gp = attention_backward(H, attn_cfg, self._score_params(), attn_w, dHt)
            _store_score_grads(grads, gp)
        else:
            dH, gp, gw = multihead_backward(H, mh_cfg, dHt, cache=(per_head, head_outs))
            _store_score_grads(grads, gp)
            grads["attn.heads"] = gw

        dZ, gru_grads = gru_back(dH)
        for name, g in gru_grads.items():
            grads[f"gru.{name}"] = g
        grads["enc.W"] = dZ.T @ X
        grads["enc.b"] = dZ.sum(axis=0)
        return loss, grads

    def predict_proba(self, X) -> np.ndarray:
        return self.forward(X)[0]

    def predict_binary(self, X) -> np.ndarray:
        return binarize(self.predict_proba(X), self.config.threshold)

    def predict_events(self, X, frame_rate: float, classes=None) -> list[EventAnnotation]:
        return frames_to_events(self.predict_binary(X), frame_rate, classes)


def _store_score_grads(grads: dict, gp: ScoreParams) -> None:
    if gp.v is not None:
        grads["attn.v"] = gp.v
    if gp.W is not None:
        grads["attn.W"] = gp.W


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

def save_model(model: SedModel, path) -> None:
    """JSON checkpoint: config plus every parameter as shape + flat values.

    Python float repr round-trips binary64 exactly, so a save/load cycle
    reproduces the parameters bit for bit.
    """
    payload = {
        "format": "sedattn-checkpoint",
        "version": 1,
        "config": dataclasses.asdict(model.config),
        "params": {
            name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
            for name, arr in sorted(model.params.items())
        },
    }
    with open(path, "w") as f:
        json.dump(payload, f)


def load_model(path) -> SedModel:
    with open(path) as f:
        payload = json.load(f)
    if payload.get("format") != "sedattn-checkpoint":
        raise ValueError(f"{path} is not a sedattn checkpoint")
    config = ModelConfig(**payload["config"])
    params = {
        name: np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
        for name, spec in payload["params"].items()
    }
    return SedModel(config, params=params)
