"""Width-banked multi-head attention: every head runs the same windowed
attention layer (shared score weights) with its own width, and the output is
the weighted sum of head outputs with each head's weight normalised by its
width:

    output = sum_j (w_j / L_j) * head_j,   head_j = windowed attention at L_j

A conventional transformer multi-head block (per-head learned Q/K/V
projections, scaled dot product over the full sequence) is included as a
reference operation for contrast; it is not part of the trainable model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_matrix
from .attention import (
    AttentionConfig,
    AttentionWeights,
    ScoreKind,
    ScoreParams,
    attend_windowed,
    attention_backward,
    init_score_params,
)
from .numerics import init_normal, softmax_rows

__all__ = [
    "width_bank",
    "MultiHeadConfig",
    "multihead_attend",
    "multihead_backward",
    "TransformerMhaParams",
    "init_transformer_mha",
    "transformer_mha_reference",
]


def width_bank(p: int, first: int = 2, step: int = 5) -> list[int]:
    """Attention widths for p heads: ``first`` then +``step`` per head.

    Defaults give the 11-head bank [2, 7, 12, ..., 52].
    """
    if p < 1:
        raise ValueError(f"head count p must be >= 1, got {p}")
    if first < 1 or step < 1:
        raise ValueError("first width and step must both be >= 1")
    return [first + step * j for j in range(p)]


@dataclass
class MultiHeadConfig:
    """Widths, per-head scalar weights, and the single shared score layer."""

    widths: list[int]
    head_weights: np.ndarray
    kind: ScoreKind = ScoreKind.ADDITIVE
    params: ScoreParams = field(default_factory=ScoreParams)

    def __post_init__(self):
        self.kind = ScoreKind(self.kind)
        if len(self.widths) < 1:
            raise ValueError("at least one head is required")
        if any(int(L) < 1 for L in self.widths):
            raise ValueError("all attention widths must be >= 1")
        if any(b <= a for a, b in zip(self.widths, self.widths[1:])):
            raise ValueError(f"widths must be strictly increasing, got {self.widths}")
        self.head_weights = np.asarray(self.head_weights, dtype=np.float64)
        if self.head_weights.shape != (len(self.widths),):
            raise ValueError("need exactly one weight per head")
        if not np.all(np.isfinite(self.head_weights)):
            raise ValueError("head weights must be finite")

    @property
    def n_heads(self) -> int:
        return len(self.widths)

    def effective_weights(self) -> np.ndarray:
        """The coefficient actually applied to each head: w_j / L_j."""
        return self.head_weights / np.asarray(self.widths, dtype=np.float64)

    def parameter_census(self) -> dict[str, int]:
        """Learnable parameter counts; the score layer is shared by all
        heads, so only the p scalars scale with head count."""
        score_n = 0
        if self.params.v is not None:
            score_n += self.params.v.size
        if self.params.W is not None:
            score_n += self.params.W.size
        return {"score": score_n, "head_weights": self.n_heads}


def make_multihead_config(
    p: int = 11,
    first: int = 2,
    step: int = 5,
    kind: ScoreKind = ScoreKind.ADDITIVE,
    d: int = 32,
    d_a: int | None = None,
    seed: int = 0,
    std: float = 0.05,
) -> MultiHeadConfig:
    """Bank of p widths with head weights initialized to 1 and a freshly
    initialized shared score layer."""
    return MultiHeadConfig(
        widths=width_bank(p, first, step),
        head_weights=np.ones(p),
        kind=kind,
        params=init_score_params(kind, d, d_a=d_a, seed=seed, std=std),
    )


def _head_config(mh: MultiHeadConfig, L: int, d: int) -> AttentionConfig:
    return AttentionConfig(kind=mh.kind, width=int(L), d=d)


def multihead_attend(H, config: MultiHeadConfig):
    """Width-banked multi-head attention.

    Returns (output sequence, list of per-head AttentionWeights). The output
    is the plain weighted sum sum_j (w_j / L_j) head_j; it is not
    renormalised by sum_j w_j / L_j.
    """
    H = as_matrix(H, "H")
    T, d = H.shape
    if T < 1:
        raise ValueError("H must contain at least one frame")
    out = np.zeros_like(H)
    per_head: list[AttentionWeights] = []
    coeffs = config.effective_weights()
    for L, c in zip(config.widths, coeffs):
        head_out, head_w = attend_windowed(H, _head_config(config, L, d), config.params)
        out += c * head_out
        per_head.append(head_w)
    return out, per_head


def multihead_attend_cached(H, config: MultiHeadConfig):
    """Like multihead_attend but also returns raw per-head outputs, which
    the backward pass needs for the head-weight gradients."""
    H = as_matrix(H, "H")
    T, d = H.shape
    out = np.zeros_like(H)
    per_head = []
    head_outs = []
    coeffs = config.effective_weights()
    for L, c in zip(config.widths, coeffs):
        head_out, head_w = attend_windowed(H, _head_config(config, L, d), config.params)
        out += c * head_out
        per_head.append(head_w)
        head_outs.append(head_out)
    return out, per_head, head_outs


def multihead_backward(H, config: MultiHeadConfig, upstream, cache=None):
    """Gradients through the width-banked multi-head layer.

    Returns (grad_H, grad_score_params, grad_head_weights). ``cache`` may
    hold (per_head_weights, per_head_outputs) from
    ``multihead_attend_cached`` to skip the forward recomputation.
    """
    H = as_matrix(H, "H")
    G = as_matrix(upstream, "upstream")
    if G.shape != H.shape:
        raise ValueError(f"upstream shape {G.shape} != H shape {H.shape}")
    T, d = H.shape
    if cache is None:
        _, per_head, head_outs = multihead_attend_cached(H, config)
    else:
        per_head, head_outs = cache
    widths = np.asarray(config.widths, dtype=np.float64)
    grad_H = np.zeros_like(H)
    grad_params = ScoreParams()
    grad_w = np.empty(config.n_heads)
    for j, L in enumerate(config.widths):
        grad_w[j] = float((G * head_outs[j]).sum()) / widths[j]
        head_up = (config.head_weights[j] / widths[j]) * G
        gH, gp = attention_backward(H, _head_config(config, L, d), config.params,
                                    per_head[j], head_up)
        grad_H += gH
        if gp.v is not None:
            grad_params.v = gp.v if grad_params.v is None else grad_params.v + gp.v
        if gp.W is not None:
            grad_params.W = gp.W if grad_params.W is None else grad_params.W + gp.W
    return grad_H, grad_params, grad_w


# ---------------------------------------------------------------------------
# transformer-style reference (contrast operation only)
# ---------------------------------------------------------------------------

@dataclass
class TransformerMhaParams:
    """Per-head projections stacked as (p, d, d_k) plus the (p*d_k, d)
    output projection."""

    Wq: np.ndarray
    Wk: np.ndarray
    Wv: np.ndarray
    Wo: np.ndarray

    def __post_init__(self):
        if self.Wq.ndim != 3 or self.Wq.shape != self.Wk.shape or self.Wq.shape != self.Wv.shape:
            raise ValueError("Wq/Wk/Wv must share shape (p, d, d_k)")
        p, d, dk = self.Wq.shape
        if dk < 1:
            raise ValueError("key dimension d_k must be >= 1")
        if self.Wo.shape != (p * dk, d):
            raise ValueError(f"Wo must have shape {(p * dk, d)}, got {self.Wo.shape}")

    @property
    def n_heads(self) -> int:
        return self.Wq.shape[0]

    @property
    def d_k(self) -> int:
        return self.Wq.shape[2]


def init_transformer_mha(p: int, d: int, d_k: int, seed: int = 0,
                         std: float = 0.05) -> TransformerMhaParams:
    return TransformerMhaParams(
        Wq=init_normal((p, d, d_k), 0.0, std, seed, "mha.Wq"),
        Wk=init_normal((p, d, d_k), 0.0, std, seed, "mha.Wk"),
        Wv=init_normal((p, d, d_k), 0.0, std, seed, "mha.Wv"),
        Wo=init_normal((p * d_k, d), 0.0, std, seed, "mha.Wo"),
    )


def transformer_mha_reference(H, params: TransformerMhaParams) -> np.ndarray:
    """Standard multi-head scaled-dot-product attention over the full
    sequence, with per-head learned Q/K/V projections and an output
    projection. Reference/contrast operation; forward only."""
    H = as_matrix(H, "H")
    T, d = H.shape
    if params.Wq.shape[1] != d:
        raise ValueError(f"projections expect d={params.Wq.shape[1]}, got {d}")
    dk = params.d_k
    heads = []
    for j in range(params.n_heads):
        Q = H @ params.Wq[j]
        K = H @ params.Wk[j]
        V = H @ params.Wv[j]
        A = softmax_rows(Q @ K.T / np.sqrt(dk))
        heads.append(A @ V)
    return np.concatenate(heads, axis=1) @ params.Wo
