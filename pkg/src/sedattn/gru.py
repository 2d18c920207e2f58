"""Single-layer GRU with hand-derived backpropagation through time.

Gate convention (h_0 = 0):

    z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)          update gate
    r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)          reset gate
    c_t = tanh(W_c x_t + U_c (r_t * h_{t-1}) + b_c)     candidate
    h_t = z_t * h_{t-1} + (1 - z_t) * c_t

The input projections for the whole sequence are computed up front so the
recurrence loop touches only small per-step vectors; the weight gradients
are likewise assembled from whole-sequence matmuls after the backward loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_matrix
from .numerics import init_normal

__all__ = ["GruParams", "init_gru_params", "gru_forward", "gru_backward"]


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class GruParams:
    Wz: np.ndarray  # (d, d_in)
    Wr: np.ndarray
    Wc: np.ndarray
    Uz: np.ndarray  # (d, d)
    Ur: np.ndarray
    Uc: np.ndarray
    bz: np.ndarray  # (d,)
    br: np.ndarray
    bc: np.ndarray

    def __post_init__(self):
        d, d_in = self.Wz.shape
        for name in ("Wr", "Wc"):
            if getattr(self, name).shape != (d, d_in):
                raise ValueError(f"{name} must have shape {(d, d_in)}")
        for name in ("Uz", "Ur", "Uc"):
            if getattr(self, name).shape != (d, d):
                raise ValueError(f"{name} must have shape {(d, d)}")
        for name in ("bz", "br", "bc"):
            if getattr(self, name).shape != (d,):
                raise ValueError(f"{name} must have shape {(d,)}")

    @property
    def hidden_dim(self) -> int:
        return self.Wz.shape[0]

    @property
    def input_dim(self) -> int:
        return self.Wz.shape[1]


def init_gru_params(d_in: int, d: int, seed: int = 0, std: float = 0.05,
                    tag: str = "gru") -> GruParams:
    def w(name, shape):
        return init_normal(shape, 0.0, std, seed, f"{tag}.{name}")

    return GruParams(
        Wz=w("Wz", (d, d_in)), Wr=w("Wr", (d, d_in)), Wc=w("Wc", (d, d_in)),
        Uz=w("Uz", (d, d)), Ur=w("Ur", (d, d)), Uc=w("Uc", (d, d)),
        bz=np.zeros(d), br=np.zeros(d), bc=np.zeros(d),
    )


def _forward(Z: np.ndarray, params: GruParams):
    T = Z.shape[0]
    d = params.hidden_dim
    Xz = Z @ params.Wz.T + params.bz
    Xr = Z @ params.Wr.T + params.br
    Xc = Z @ params.Wc.T + params.bc
    Uzr_T = np.vstack([params.Uz, params.Ur]).T  # (d, 2d): one matvec for both gates
    Uc_T = params.Uc.T
    H = np.empty((T, d))
    Zg = np.empty((T, d))
    Rg = np.empty((T, d))
    Cg = np.empty((T, d))
    h = np.zeros(d)
    for t in range(T):
        zr = _sigmoid(np.concatenate([Xz[t], Xr[t]]) + h @ Uzr_T)
        z, r = zr[:d], zr[d:]
        c = np.tanh(Xc[t] + (r * h) @ Uc_T)
        h = z * h + (1.0 - z) * c
        Zg[t], Rg[t], Cg[t], H[t] = z, r, c, h
    return H, (Zg, Rg, Cg)


def gru_forward(Z, params: GruParams) -> np.ndarray:
    """Hidden state sequence H (T x d) for encoded input Z (T x d_in)."""
    Z = as_matrix(Z, "Z")
    if Z.shape[0] < 1:
        raise ValueError("input sequence must contain at least one frame")
    if Z.shape[1] != params.input_dim:
        raise ValueError(f"input dim {Z.shape[1]} != GRU input dim {params.input_dim}")
    H, _ = _forward(Z, params)
    return H


def gru_backward(Z, params: GruParams, dH):
    """BPTT gradients given upstream dLoss/dH.

    Returns (dZ, grads) with grads a dict keyed like GruParams fields.
    Forward intermediates are recomputed; callers training in a loop should
    use gru_forward_backward to reuse them.
    """
    Z = as_matrix(Z, "Z")
    H, cache = _forward(Z, params)
    return _backward(Z, params, H, cache, as_matrix(dH, "dH"))


def gru_forward_backward(Z, params: GruParams):
    """Forward pass returning (H, closure); the closure maps upstream dH to
    (dZ, grads) without recomputing the forward intermediates."""
    Z = as_matrix(Z, "Z")
    H, cache = _forward(Z, params)

    def backward(dH):
        return _backward(Z, params, H, cache, np.asarray(dH, dtype=np.float64))

    return H, backward


def _backward(Z, params, H, cache, dH):
    if dH.shape != H.shape:
        raise ValueError(f"dH shape {dH.shape} != H shape {H.shape}")
    Zg, Rg, Cg = cache
    T = Z.shape[0]
    d = params.hidden_dim
    Uzr = np.vstack([params.Uz, params.Ur])  # (2d, d)
    Uc_ = params.Uc
    dAz = np.empty((T, d))
    dAr = np.empty((T, d))
    dAc = np.empty((T, d))
    carry = np.zeros(d)
    for t in range(T - 1, -1, -1):
        dh = dH[t] + carry
        z, r, c = Zg[t], Rg[t], Cg[t]
        h_prev = H[t - 1] if t > 0 else np.zeros(d)
        dz = dh * (h_prev - c)
        da_c = (dh * (1.0 - z)) * (1.0 - c * c)
        carry = dh * z
        drh = da_c @ Uc_
        da_r = (drh * h_prev) * (r * (1.0 - r))
        carry += drh * r
        da_z = dz * (z * (1.0 - z))
        carry += np.concatenate([da_z, da_r]) @ Uzr
        dAz[t], dAr[t], dAc[t] = da_z, da_r, da_c
    H_prev = np.vstack([np.zeros(d), H[:-1]])
    RH_prev = Rg * H_prev
    grads = {
        "Wz": dAz.T @ Z, "Wr": dAr.T @ Z, "Wc": dAc.T @ Z,
        "Uz": dAz.T @ H_prev, "Ur": dAr.T @ H_prev, "Uc": dAc.T @ RH_prev,
        "bz": dAz.sum(axis=0), "br": dAr.sum(axis=0), "bc": dAc.sum(axis=0),
    }
    dZ = dAz @ params.Wz + dAr @ params.Wr + dAc @ params.Wc
    return dZ, grads
