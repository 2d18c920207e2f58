"""Self-attention over a hidden sequence, global or restricted to a centered
window of configurable width, with analytic backward passes.

Score functions supported: additive (v' tanh(W [h_t; h_i])), general
(h_t' W h_i), dot (h_t' h_i), and scaled dot (cosine similarity of the two
vectors). The windowed variant attends, for each query frame t, only to
sources i with |i - t| <= floor(width / 2); windows are clamped at the
sequence edges and the softmax runs over the present indices only.

Cost of the windowed path is O(T * width * d) in time and memory. When the
window covers the whole sequence (floor(width/2) >= T - 1) the computation
is routed through the dense kernel, so it equals global attention exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._validation import as_matrix, as_vector, check_shape
from .numerics import init_normal, softmax_rows

__all__ = [
    "ScoreKind",
    "ScoreParams",
    "AttentionConfig",
    "AttentionWeights",
    "DegenerateInputWarning",
    "init_score_params",
    "score",
    "attend_global",
    "attend_windowed",
    "attention_backward",
    "write_weights_csv",
]

# Below this norm a vector counts as zero for the cosine (scaled dot) score.
DEGENERATE_NORM_TOL = 1e-12

# Rough temporaries budget (in float64 elements) for chunked dense additive
# scoring, which would otherwise materialize a T x T x d_a array.
_CHUNK_BUDGET = 1 << 22


class DegenerateInputWarning(UserWarning):
    """Scaled-dot score saw a zero-norm vector; the score was defined as 0."""


class ScoreKind(str, Enum):
    ADDITIVE = "additive"
    GENERAL = "general"
    DOT = "dot"
    SCALED_DOT = "scaled_dot"


@dataclass
class ScoreParams:
    """Learnable weights of the score function.

    ``v``: (d_a,) additive only.  ``W``: (d_a, 2d) for additive,
    (d, d) for general, absent for dot / scaled dot.
    """

    v: np.ndarray | None = None
    W: np.ndarray | None = None

    def copy(self) -> "ScoreParams":
        return ScoreParams(
            v=None if self.v is None else self.v.copy(),
            W=None if self.W is None else self.W.copy(),
        )


@dataclass
class AttentionConfig:
    kind: ScoreKind = ScoreKind.ADDITIVE
    width: int | None = None  # None => global attention
    d: int = 32
    d_a: int | None = None  # additive projection dim, defaults to d

    def __post_init__(self):
        self.kind = ScoreKind(self.kind)
        if self.width is not None and int(self.width) < 1:
            raise ValueError(f"attention width must be >= 1, got {self.width}")
        if self.d < 1:
            raise ValueError("hidden dim d must be >= 1")
        if self.d_a is None:
            self.d_a = self.d
        if self.d_a < 1:
            raise ValueError("additive dim d_a must be >= 1")


@dataclass
class AttentionWeights:
    """Row-stochastic attention weights, banded or dense.

    Row t of ``values`` holds the weights for source frames
    ``starts[t] .. starts[t] + lengths[t] - 1``; cells past ``lengths[t]``
    are zero padding. Dense (global) weights use starts = 0, lengths = T.
    """

    values: np.ndarray
    starts: np.ndarray
    lengths: np.ndarray
    n_frames: int
    half_width: int | None = None  # None for global attention
    degenerate_pairs: int = 0

    def row(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Source indices and weights attended by query frame t."""
        lo, n = int(self.starts[t]), int(self.lengths[t])
        return np.arange(lo, lo + n), self.values[t, :n]

    def to_dense(self) -> np.ndarray:
        """Full T x T matrix with zeros outside each row's window."""
        T = self.n_frames
        dense = np.zeros((T, T))
        for t in range(T):
            lo, n = int(self.starts[t]), int(self.lengths[t])
            dense[t, lo:lo + n] = self.values[t, :n]
        return dense

    def row_sums(self) -> np.ndarray:
        return self.values.sum(axis=1)


def init_score_params(
    kind: ScoreKind,
    d: int,
    d_a: int | None = None,
    seed: int = 0,
    std: float = 0.05,
    tag: str = "attn",
) -> ScoreParams:
    """Seeded N(0, std) initialization of the score weights for ``kind``."""
    kind = ScoreKind(kind)
    if d_a is None:
        d_a = d
    if kind is ScoreKind.ADDITIVE:
        return ScoreParams(
            v=init_normal((d_a,), 0.0, std, seed, tag + ".v"),
            W=init_normal((d_a, 2 * d), 0.0, std, seed, tag + ".W"),
        )
    if kind is ScoreKind.GENERAL:
        return ScoreParams(W=init_normal((d, d), 0.0, std, seed, tag + ".W"))
    return ScoreParams()


def _check_params(kind: ScoreKind, params: ScoreParams, d: int) -> None:
    if kind is ScoreKind.ADDITIVE:
        if params.v is None or params.W is None:
            raise ValueError("additive score requires params.v and params.W")
        if params.W.ndim != 2 or params.W.shape[1] != 2 * d:
            raise ValueError(f"additive W must be (d_a, {2 * d}), got {params.W.shape}")
        if params.v.shape != (params.W.shape[0],):
            raise ValueError("additive v length must match W rows")
    elif kind is ScoreKind.GENERAL:
        if params.W is None:
            raise ValueError("general score requires params.W")
        check_shape(params.W, (d, d), "general W")


def score(kind: ScoreKind, h_t, h_i, params: ScoreParams | None = None,
          on_degenerate: str = "warn") -> float:
    """Similarity score of a single query/key vector pair.

    For the scaled-dot (cosine) kind, a zero-norm vector makes the score
    undefined; it is defined as 0 here, and either warned about or raised,
    per ``on_degenerate`` ("warn" or "raise").
    """
    kind = ScoreKind(kind)
    h_t = as_vector(h_t, "h_t")
    h_i = as_vector(h_i, "h_i")
    if h_t.shape != h_i.shape:
        raise ValueError(f"h_t shape {h_t.shape} != h_i shape {h_i.shape}")
    d = h_t.size
    if params is None:
        params = ScoreParams()
    _check_params(kind, params, d)
    if kind is ScoreKind.DOT:
        return float(h_t @ h_i)
    if kind is ScoreKind.SCALED_DOT:
        nt, ni = np.linalg.norm(h_t), np.linalg.norm(h_i)
        if nt < DEGENERATE_NORM_TOL or ni < DEGENERATE_NORM_TOL:
            if on_degenerate == "raise":
                raise FloatingPointError("scaled-dot score undefined for zero-norm vector")
            warnings.warn("scaled-dot score on zero-norm vector, defined as 0",
                          DegenerateInputWarning, stacklevel=2)
            return 0.0
        return float(h_t @ h_i / (nt * ni))
    if kind is ScoreKind.GENERAL:
        return float(h_t @ params.W @ h_i)
    # additive
    u = np.tanh(params.W @ np.concatenate([h_t, h_i]))
    return float(params.v @ u)


# ---------------------------------------------------------------------------
# dense (global) kernels
# ---------------------------------------------------------------------------

def _split_additive(params: ScoreParams, d: int) -> tuple[np.ndarray, np.ndarray]:
    return params.W[:, :d], params.W[:, d:]


def _dense_scores(H: np.ndarray, kind: ScoreKind, params: ScoreParams):
    """Full T x T score matrix; returns (scores, degenerate_pair_count)."""
    T, d = H.shape
    deg = 0
    if kind is ScoreKind.DOT:
        return H @ H.T, deg
    if kind is ScoreKind.SCALED_DOT:
        dots = H @ H.T
        n = np.linalg.norm(H, axis=1)
        bad = n < DEGENERATE_NORM_TOL
        safe = np.where(bad, 1.0, n)
        S = dots / (safe[:, None] * safe[None, :])
        if bad.any():
            deg = int(bad.sum()) * T * 2 - int(bad.sum()) ** 2  # pairs touching a zero row
            S[bad, :] = 0.0
            S[:, bad] = 0.0
        return S, deg
    if kind is ScoreKind.GENERAL:
        return (H @ params.W) @ H.T, deg
    # additive, chunked over query rows to bound temporaries
    W1, W2 = _split_additive(params, d)
    P = H @ W1.T
    Q = H @ W2.T
    da = P.shape[1]
    S = np.empty((T, T))
    chunk = max(1, _CHUNK_BUDGET // max(1, T * da))
    for s in range(0, T, chunk):
        e = min(s + chunk, T)
        u = np.tanh(P[s:e, None, :] + Q[None, :, :])
        S[s:e] = u @ params.v
    return S, deg


def _dense_attend(H: np.ndarray, kind: ScoreKind, params: ScoreParams):
    T = H.shape[0]
    S, deg = _dense_scores(H, kind, params)
    A = softmax_rows(S)
    out = A @ H
    weights = AttentionWeights(
        values=A,
        starts=np.zeros(T, dtype=np.int64),
        lengths=np.full(T, T, dtype=np.int64),
        n_frames=T,
        half_width=None,
        degenerate_pairs=deg,
    )
    return out, weights


def _dense_backward(H, kind, params, A, G):
    """Backward through dense attention; returns (grad_H, grad_params)."""
    T, d = H.shape
    dA = G @ H.T
    ds = A * (dA - (A * dA).sum(axis=1, keepdims=True))
    grad_H = A.T @ G  # value path
    gp = ScoreParams()
    if kind is ScoreKind.DOT:
        grad_H += ds @ H + ds.T @ H
    elif kind is ScoreKind.GENERAL:
        W = params.W
        grad_H += (ds @ H) @ W.T + (ds.T @ H) @ W
        gp.W = H.T @ ds @ H
    elif kind is ScoreKind.SCALED_DOT:
        n = np.linalg.norm(H, axis=1)
        bad = n < DEGENERATE_NORM_TOL
        safe = np.where(bad, 1.0, n)
        cos = (H @ H.T) / (safe[:, None] * safe[None, :])
        if bad.any():
            # score is the constant 0 for these pairs; no gradient flows
            ds = ds.copy()
            ds[bad, :] = 0.0
            ds[:, bad] = 0.0
            cos[bad, :] = 0.0
            cos[:, bad] = 0.0
        dsn = ds / (safe[:, None] * safe[None, :])
        grad_H += dsn @ H - (((ds * cos).sum(axis=1) / safe**2)[:, None]) * H
        grad_H += dsn.T @ H - (((ds * cos).sum(axis=0) / safe**2)[:, None]) * H
    else:  # additive
        W1, W2 = _split_additive(params, d)
        P = H @ W1.T
        Q = H @ W2.T
        da = P.shape[1]
        v = params.v
        grad_v = np.zeros(da)
        grad_P = np.empty((T, da))
        grad_Q = np.zeros((T, da))
        chunk = max(1, _CHUNK_BUDGET // max(1, T * da))
        for s in range(0, T, chunk):
            e = min(s + chunk, T)
            tan = np.tanh(P[s:e, None, :] + Q[None, :, :])
            grad_v += np.einsum("ti,tia->a", ds[s:e], tan)
            np.multiply(tan, tan, out=tan)
            np.subtract(1.0, tan, out=tan)  # tan now holds 1 - tanh^2
            g_u = ds[s:e, :, None] * (v[None, None, :] * tan)
            grad_P[s:e] = g_u.sum(axis=1)
            grad_Q += g_u.sum(axis=0)
        gp.v = grad_v
        gp.W = np.concatenate([grad_P.T @ H, grad_Q.T @ H], axis=1)
        grad_H += grad_P @ W1 + grad_Q @ W2
    return grad_H, gp


# ---------------------------------------------------------------------------
# banded (windowed) kernels
# ---------------------------------------------------------------------------

def _band_geometry(T: int, h: int):
    """Window bookkeeping: padded alignment maps column k of query row t to
    source index t - h + k."""
    Wb = 2 * h + 1
    k = np.arange(Wb)[None, :]
    t = np.arange(T)[:, None]
    src = t - h + k
    valid = (src >= 0) & (src < T)
    return Wb, valid


def _pad_rows(X: np.ndarray, h: int) -> np.ndarray:
    T = X.shape[0]
    out = np.zeros((T + 2 * h,) + X.shape[1:])
    out[h:h + T] = X
    return out


def _band_windows(X: np.ndarray, h: int) -> np.ndarray:
    """(T, feat..., 2h+1) sliding windows of X padded with h zero rows."""
    return sliding_window_view(_pad_rows(X, h), 2 * h + 1, axis=0)


def _band_scores(H, kind, params, h, valid):
    """Banded scores in padded alignment; invalid cells are filled later."""
    T, d = H.shape
    deg = 0
    win = _band_windows(H, h)  # (T, d, Wb)
    if kind is ScoreKind.DOT:
        return np.einsum("td,tdw->tw", H, win), deg
    if kind is ScoreKind.GENERAL:
        return np.einsum("td,tdw->tw", H @ params.W, win), deg
    if kind is ScoreKind.SCALED_DOT:
        dots = np.einsum("td,tdw->tw", H, win)
        n = np.linalg.norm(H, axis=1)
        bad = n < DEGENERATE_NORM_TOL
        safe = np.where(bad, 1.0, n)
        nwin = _band_windows(safe[:, None], h)[:, 0, :]  # padded rows -> 0 -> masked anyway
        nwin = np.where(nwin == 0.0, 1.0, nwin)
        S = dots / (safe[:, None] * nwin)
        if bad.any():
            badwin = _band_windows(bad.astype(np.float64)[:, None], h)[:, 0, :] > 0.0
            pair_bad = (bad[:, None] | badwin) & valid
            deg = int(pair_bad.sum())
            S[pair_bad] = 0.0
        return S, deg
    W1, W2 = _split_additive(params, d)
    P = H @ W1.T
    Q = H @ W2.T
    qwin = _band_windows(Q, h)  # (T, d_a, Wb)
    u = np.tanh(P[:, :, None] + qwin)
    return np.einsum("a,taw->tw", params.v, u), deg


def _band_pack(A: np.ndarray, h: int, T: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shift padded-aligned rows so each row starts at its first valid source."""
    starts = np.maximum(0, np.arange(T) - h).astype(np.int64)
    ends = np.minimum(T - 1, np.arange(T) + h)
    lengths = (ends - starts + 1).astype(np.int64)
    width = min(2 * h + 1, T)
    values = np.zeros((T, width))
    shift_rows = min(h, T)
    values[shift_rows:, :] = A[shift_rows:, :width]
    for t in range(shift_rows):
        off = h - t
        n = int(lengths[t])
        values[t, :n] = A[t, off:off + n]
    return values, starts, lengths


def _band_unpack(weights: AttentionWeights, h: int) -> np.ndarray:
    """Inverse of _band_pack: padded-aligned (T, 2h+1) array."""
    T = weights.n_frames
    Wb = 2 * h + 1
    A = np.zeros((T, Wb))
    shift_rows = min(h, T)
    width = weights.values.shape[1]
    A[shift_rows:, :width] = weights.values[shift_rows:, :]
    for t in range(shift_rows):
        off = h - t
        n = int(weights.lengths[t])
        A[t, off:off + n] = weights.values[t, :n]
    return A


def _band_attend(H, kind, params, h):
    T = H.shape[0]
    Wb, valid = _band_geometry(T, h)
    S, deg = _band_scores(H, kind, params, h, valid)
    S[~valid] = -np.inf
    A = softmax_rows(S)
    win = _band_windows(H, h)
    out = np.einsum("tw,tdw->td", A, win)
    values, starts, lengths = _band_pack(A, h, T)
    weights = AttentionWeights(values=values, starts=starts, lengths=lengths,
                               n_frames=T, half_width=h, degenerate_pairs=deg)
    return out, weights


def _band_backward(H, kind, params, weights, G, h):
    T, d = H.shape
    Wb, valid = _band_geometry(T, h)
    A = _band_unpack(weights, h)
    win = _band_windows(H, h)
    dA = np.einsum("td,tdw->tw", G, win)
    ds = A * (dA - (A * dA).sum(axis=1, keepdims=True))

    grad_Hpad = np.zeros((T + 2 * h, d))
    for k in range(Wb):  # value path scatter: source index = t - h + k
        grad_Hpad[k:k + T] += A[:, k:k + 1] * G

    gp = ScoreParams()
    if kind is ScoreKind.DOT:
        grad_t = np.einsum("tw,tdw->td", ds, win)
        for k in range(Wb):
            grad_Hpad[k:k + T] += ds[:, k:k + 1] * H
    elif kind is ScoreKind.GENERAL:
        W = params.W
        mixed = np.einsum("tw,tdw->td", ds, win)
        grad_t = mixed @ W.T
        HW = H @ W
        for k in range(Wb):
            grad_Hpad[k:k + T] += ds[:, k:k + 1] * HW
        gp.W = H.T @ mixed
    elif kind is ScoreKind.SCALED_DOT:
        n = np.linalg.norm(H, axis=1)
        bad = n < DEGENERATE_NORM_TOL
        safe = np.where(bad, 1.0, n)
        npad = _pad_rows(safe[:, None], h)[:, 0]
        npad = np.where(npad == 0.0, 1.0, npad)
        nwin = sliding_window_view(npad, Wb, axis=0)
        dots = np.einsum("td,tdw->tw", H, win)
        cos = dots / (safe[:, None] * nwin)
        badpad = _pad_rows(bad.astype(np.float64)[:, None], h)[:, 0]
        badwin = sliding_window_view(badpad, Wb, axis=0) > 0.0
        pair_bad = bad[:, None] | badwin
        if pair_bad.any():
            ds = np.where(pair_bad, 0.0, ds)
            cos = np.where(pair_bad, 0.0, cos)
        dsn = ds / (safe[:, None] * nwin)
        grad_t = np.einsum("tw,tdw->td", dsn, win)
        grad_t -= ((ds * cos).sum(axis=1) / safe**2)[:, None] * H
        Hpad = _pad_rows(H, h)
        npad2 = npad**2
        for k in range(Wb):
            grad_Hpad[k:k + T] += (ds[:, k] / (safe * nwin[:, k]))[:, None] * H
            grad_Hpad[k:k + T] -= ((ds[:, k] * cos[:, k]) / npad2[k:k + T])[:, None] * Hpad[k:k + T]
    else:  # additive
        W1, W2 = _split_additive(params, d)
        P = H @ W1.T
        Q = H @ W2.T
        da = P.shape[1]
        v = params.v
        qwin = _band_windows(Q, h)
        tan = np.tanh(P[:, :, None] + qwin)  # (T, d_a, Wb)
        gp.v = np.einsum("tw,taw->a", ds, tan)
        np.multiply(tan, tan, out=tan)
        np.subtract(1.0, tan, out=tan)
        g_u = ds[:, None, :] * (v[None, :, None] * tan)  # (T, d_a, Wb)
        grad_P = g_u.sum(axis=2)
        grad_Qpad = np.zeros((T + 2 * h, da))
        for k in range(Wb):
            grad_Qpad[k:k + T] += g_u[:, :, k]
        grad_Q = grad_Qpad[h:h + T]
        gp.W = np.concatenate([grad_P.T @ H, grad_Q.T @ H], axis=1)
        grad_t = grad_P @ W1 + grad_Q @ W2

    grad_H = grad_Hpad[h:h + T] + grad_t
    return grad_H, gp


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def attend_global(H, params: ScoreParams | None = None,
                  kind: ScoreKind = ScoreKind.ADDITIVE):
    """Global self-attention: every frame attends over the whole sequence.

    Returns (attended T x d sequence, dense AttentionWeights).
    """
    H = as_matrix(H, "H")
    if H.shape[0] < 1:
        raise ValueError("H must contain at least one frame")
    kind = ScoreKind(kind)
    if params is None:
        params = ScoreParams()
    _check_params(kind, params, H.shape[1])
    return _dense_attend(H, kind, params)


def attend_windowed(H, config: AttentionConfig, params: ScoreParams | None = None):
    """Memory-controlled self-attention with window ``config.width``.

    Each query frame t attends over source frames
    [max(0, t - h), min(T - 1, t + h)] with h = floor(width / 2); the
    softmax is taken over those indices only. Returns
    (attended sequence, banded AttentionWeights).
    """
    H = as_matrix(H, "H")
    T = H.shape[0]
    if T < 1:
        raise ValueError("H must contain at least one frame")
    if config.width is None:
        raise ValueError("attend_windowed requires config.width; use attend_global otherwise")
    if params is None:
        params = ScoreParams()
    _check_params(config.kind, params, H.shape[1])
    h = int(config.width) // 2
    if h >= T - 1:
        # window covers the full sequence: identical to global attention
        out, weights = _dense_attend(H, config.kind, params)
        weights.half_width = h
        return out, weights
    return _band_attend(H, config.kind, params, h)


def attention_backward(H, config: AttentionConfig, params: ScoreParams | None,
                       weights: AttentionWeights, upstream):
    """Gradients of windowed/global attention.

    ``upstream`` is dLoss/dOutput (T x d). Returns (grad_H, grad_params)
    where grad_params is a ScoreParams holding gradients for whichever
    weights the configured score kind has (None fields otherwise).
    """
    H = as_matrix(H, "H")
    G = as_matrix(upstream, "upstream")
    if G.shape != H.shape:
        raise ValueError(f"upstream shape {G.shape} != H shape {H.shape}")
    if params is None:
        params = ScoreParams()
    _check_params(config.kind, params, H.shape[1])
    T = H.shape[0]
    if weights.n_frames != T:
        raise ValueError("weights do not match H")
    if config.width is None:
        return _dense_backward(H, config.kind, params, weights.values, G)
    h = int(config.width) // 2
    if h >= T - 1:
        return _dense_backward(H, config.kind, params, weights.values, G)
    return _band_backward(H, config.kind, params, weights, G, h)


def write_weights_csv(weights: AttentionWeights, fileobj) -> None:
    """CSV export: rows = query frames, columns = source frames.

    Cells outside a banded row's window are written empty; weights inside
    the window are written with full float precision.
    """
    T = weights.n_frames
    header = "query," + ",".join(f"src_{i}" for i in range(T))
    fileobj.write(header + "\n")
    for t in range(T):
        lo, n = int(weights.starts[t]), int(weights.lengths[t])
        cells = [""] * T
        for j in range(n):
            cells[lo + j] = repr(float(weights.values[t, j]))
        fileobj.write(f"{t}," + ",".join(cells) + "\n")
