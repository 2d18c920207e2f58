"""Windowed (memory-controlled) self-attention for polyphonic sound event
detection: attention kernels with analytic gradients, a small trainable
detector, sed_eval-style metrics, a synthetic soundscape generator, and an
experiment harness.
"""

from .numerics import (
    AdamState,
    NumericError,
    adam_step,
    finite_diff_grad,
    init_normal,
    seeded_rng,
    softmax,
)
from .attention import (
    AttentionConfig,
    AttentionWeights,
    DegenerateInputWarning,
    ScoreKind,
    ScoreParams,
    attend_global,
    attend_windowed,
    attention_backward,
    init_score_params,
    score,
)

__version__ = "0.1.0"
