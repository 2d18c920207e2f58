"""Attention-weight exports: CSV (banded cells empty outside the window) and
a small self-contained SVG heatmap with axes labeled in frames and seconds.

Multi-head models write one CSV/SVG pair per head plus the effective
combined weights (each head's matrix scaled by its w_j / L_j coefficient).
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .attention import AttentionWeights, write_weights_csv
from .model import SedModel
from .soundscapes import SoundscapeClip

__all__ = ["UnsupportedVariantError", "export_attention_heatmap", "write_weights_svg"]

# matrices larger than this are mean-binned before rendering
_MAX_RENDER_CELLS = 200


class UnsupportedVariantError(ValueError):
    """Heatmap export needs a model with an attention stage."""


def _binned(dense: np.ndarray, max_cells: int) -> tuple[np.ndarray, int]:
    T = dense.shape[0]
    factor = max(1, math.ceil(T / max_cells))
    if factor == 1:
        return dense, 1
    n = math.ceil(T / factor)
    padded = np.zeros((n * factor, n * factor))
    padded[:T, :T] = dense
    binned = padded.reshape(n, factor, n, factor).mean(axis=(1, 3))
    return binned, factor


def write_weights_svg(weights: AttentionWeights, path, frame_rate: float,
                      title: str = "attention weights") -> None:
    """Linear-grayscale heatmap (white = 0, black = row maximum), queries on
    the vertical axis, sources on the horizontal, tick labels as
    frame (second) pairs."""
    dense = weights.to_dense()
    T = weights.n_frames
    grid, factor = _binned(dense, _MAX_RENDER_CELLS)
    n = grid.shape[0]
    vmax = float(grid.max()) or 1.0

    cell = max(2, 600 // n)
    size = n * cell
    margin_left, margin_top, margin_bottom = 70, 30, 45
    width = margin_left + size + 20
    height = margin_top + size + margin_bottom

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{margin_left + size / 2:.0f}" y="16" text-anchor="middle" '
        f'font-family="monospace" font-size="12">{title}</text>',
    ]
    threshold = vmax / 512.0  # cells this close to white are left unpainted
    for i in range(n):
        for j in range(n):
            v = grid[i, j]
            if v <= threshold:
                continue
            shade = int(round(255.0 * (1.0 - v / vmax)))
            parts.append(
                f'<rect x="{margin_left + j * cell}" y="{margin_top + i * cell}" '
                f'width="{cell}" height="{cell}" fill="rgb({shade},{shade},{shade})"/>')
    parts.append(
        f'<rect x="{margin_left}" y="{margin_top}" width="{size}" height="{size}" '
        f'fill="none" stroke="black" stroke-width="1"/>')

    n_ticks = min(6, T)
    for k in range(n_ticks):
        frame = round(k * (T - 1) / max(1, n_ticks - 1)) if n_ticks > 1 else 0
        pos = (frame / max(1, T - 1)) * size if T > 1 else size / 2
        seconds = frame / frame_rate
        label = f"{frame} ({seconds:.2f}s)"
        x = margin_left + pos
        parts.append(f'<line x1="{x:.1f}" y1="{margin_top + size}" x2="{x:.1f}" '
                     f'y2="{margin_top + size + 4}" stroke="black"/>')
        parts.append(f'<text x="{x:.1f}" y="{margin_top + size + 16}" text-anchor="middle" '
                     f'font-family="monospace" font-size="9">{label}</text>')
        y = margin_top + pos
        parts.append(f'<line x1="{margin_left - 4}" y1="{y:.1f}" x2="{margin_left}" '
                     f'y2="{y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{margin_left - 6}" y="{y + 3:.1f}" text-anchor="end" '
                     f'font-family="monospace" font-size="9">{label}</text>')
    parts.append(
        f'<text x="{margin_left + size / 2:.0f}" y="{height - 6}" text-anchor="middle" '
        f'font-family="monospace" font-size="10">source frame (seconds)</text>')
    if factor > 1:
        parts.append(
            f'<text x="{width - 4}" y="{margin_top - 4}" text-anchor="end" '
            f'font-family="monospace" font-size="8">binned x{factor}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))


def _export_pair(weights: AttentionWeights, out_dir: Path, stem: str,
                 frame_rate: float, title: str) -> list[Path]:
    csv_path = out_dir / f"{stem}.csv"
    svg_path = out_dir / f"{stem}.svg"
    with open(csv_path, "w") as f:
        write_weights_csv(weights, f)
    write_weights_svg(weights, svg_path, frame_rate, title)
    return [csv_path, svg_path]


def export_attention_heatmap(model: SedModel, clip: SoundscapeClip, out_dir) -> list[Path]:
    """Run the model on one clip and export its attention weights.

    Returns the written paths. Raises UnsupportedVariantError for the
    baseline (no-attention) variant.
    """
    if model.config.attention == "none":
        raise UnsupportedVariantError(
            "the baseline variant has no attention weights to export")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, attn = model.forward(clip.features, want_attention=True)
    written: list[Path] = []
    if isinstance(attn, list):  # multi-head: one pair per head + combined
        mh = model._multihead_config()
        coeffs = mh.effective_weights()
        combined = np.zeros((attn[0].n_frames, attn[0].n_frames))
        for j, (w, L, c) in enumerate(zip(attn, mh.widths, coeffs)):
            written += _export_pair(
                w, out, f"{clip.clip_id}_head{j:02d}_L{L}", clip.frame_rate,
                f"{clip.clip_id} head {j} (L={L})")
            combined += c * w.to_dense()
        T = attn[0].n_frames
        combined_w = AttentionWeights(
            values=combined, starts=np.zeros(T, dtype=np.int64),
            lengths=np.full(T, T, dtype=np.int64), n_frames=T, half_width=None)
        written += _export_pair(combined_w, out, f"{clip.clip_id}_combined",
                                clip.frame_rate, f"{clip.clip_id} combined heads")
    else:
        label = ("global" if model.config.attention == "global"
                 else f"L={model.config.width}")
        written += _export_pair(attn, out, f"{clip.clip_id}_attention",
                                clip.frame_rate, f"{clip.clip_id} attention ({label})")
    return written
