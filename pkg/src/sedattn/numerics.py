"""Dense numeric primitives: stable softmax, seeded initialization, Adam,
and a finite-difference gradient checker.

Everything here is pure (Adam returns a new state) and float64. Gradients
elsewhere in the package are hand-derived and verified against
``finite_diff_grad``, so this module deliberately avoids any autodiff.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ._validation import NumericError, as_vector, ensure_finite

__all__ = [
    "softmax",
    "softmax_rows",
    "seeded_rng",
    "init_normal",
    "AdamState",
    "adam_step",
    "finite_diff_grad",
    "NumericError",
]


def softmax(v) -> np.ndarray:
    """Numerically stable softmax of a vector.

    Subtracts the maximum before exponentiation, so inputs with entries of
    magnitude ~1e3 still produce a distribution whose sum is 1 within 1e-12.
    """
    v = as_vector(v, "softmax input")
    shifted = v - v.max()
    e = np.exp(shifted)
    return e / e.sum()


def softmax_rows(scores: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Row-wise stable softmax of a 2-D score array.

    Rows may contain -inf (masked positions); those positions get weight 0.
    A row of all -inf is rejected, since it has no valid distribution.
    """
    if scores.ndim != 2:
        raise ValueError(f"scores must be 2-D, got shape {scores.shape}")
    m = scores.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise ValueError("softmax_rows: a row has no finite score")
    if out is None:
        out = np.empty_like(scores)
    np.subtract(scores, m, out=out)
    np.exp(out, out=out)
    out /= out.sum(axis=1, keepdims=True)
    return out


def _mix_tags(*tags) -> list[int]:
    """Map arbitrary string/int tags to a stable integer entropy list."""
    out = []
    for tag in tags:
        if isinstance(tag, str):
            digest = hashlib.sha256(tag.encode("utf-8")).digest()
            out.append(int.from_bytes(digest[:8], "little"))
        else:
            out.append(int(tag))
    return out


def seeded_rng(seed: int, *tags) -> np.random.Generator:
    """Deterministic generator for (seed, *tags).

    Distinct tags yield statistically independent streams; the same
    (seed, tags) always reproduces the identical stream.
    """
    return np.random.default_rng(np.random.SeedSequence(_mix_tags(seed, *tags)))


def init_normal(shape, mean: float = 0.0, std: float = 0.05, seed: int = 0, *tags) -> np.ndarray:
    """Seeded normal initialization (defaults: zero mean, 0.05 std)."""
    if std <= 0:
        raise ValueError(f"std must be > 0, got {std}")
    rng = seeded_rng(seed, *tags)
    return rng.normal(loc=mean, scale=std, size=shape).astype(np.float64)


@dataclass
class AdamState:
    """Per-parameter Adam moment buffers plus the completed-step count."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, param: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(param, dtype=np.float64),
                   v=np.zeros_like(param, dtype=np.float64),
                   step=0)


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    decay: float = 0.0,
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns (new_param, new_state).

    The learning rate decays per completed update as
    ``lr_t = lr / (1 + decay * t)`` with t = 0 on the first call, matching
    the common per-iteration decay convention.
    """
    if param.shape != grad.shape:
        raise ValueError(f"param shape {param.shape} != grad shape {grad.shape}")
    if state.m.shape != param.shape or state.v.shape != param.shape:
        raise ValueError("Adam state shape does not match parameter shape")
    lr_t = lr / (1.0 + decay * state.step)
    t = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new_param = param - lr_t * m_hat / (np.sqrt(v_hat) + eps)
    ensure_finite(new_param, "adam_step")
    return new_param, AdamState(m=m, v=v, step=t)


def finite_diff_grad(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f at x, entry by entry.

    The workhorse oracle for every analytic backward pass in this package.
    Raises NumericError (with the offending index) if f returns NaN/Inf.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = grad.reshape(-1)
    xw = x.copy()
    xf = xw.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + eps
        fp = float(f(xw))
        xf[i] = orig - eps
        fm = float(f(xw))
        xf[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            idx = tuple(int(j) for j in np.unravel_index(i, x.shape))
            raise NumericError(f"finite_diff_grad: non-finite f at perturbed index {idx}")
        flat[i] = (fp - fm) / (2.0 * eps)
    return grad
