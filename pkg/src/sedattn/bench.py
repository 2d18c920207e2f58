"""Timing/memory comparison of banded vs global attention kernels.

Wall times are medians over repeated runs; the memory column is a peak
working-set estimate from tracemalloc taken in a separate traced pass (so
tracing overhead never contaminates the timings). Absolute numbers and any
thresholds derived from them are reference-hardware dependent.
"""

from __future__ import annotations

import io
import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from .attention import AttentionConfig, ScoreKind, attend_global, attend_windowed, init_score_params
from .numerics import seeded_rng

__all__ = ["BenchRow", "bench_attention", "rows_to_csv", "rows_to_text"]


@dataclass
class BenchRow:
    T: int
    mode: str  # "global" or "banded"
    width: int | None
    kind: str
    d: int
    median_seconds: float
    min_seconds: float  # best-of-N; robust when the host has noisy neighbors
    peak_bytes: int


def _measure(fn, repetitions: int) -> tuple[float, float, int]:
    fn()  # warm-up: first-call allocation and cache effects stay out of the timings
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    tracemalloc.start()
    fn()
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    return float(np.median(times)), float(min(times)), int(peak)


def bench_attention(T_list, L_list, d: int = 32, kind: ScoreKind = ScoreKind.DOT,
                    repetitions: int = 3, seed: int = 0) -> list[BenchRow]:
    """Median wall time and peak-memory estimate for global attention and
    for each banded width, at every sequence length in ``T_list``."""
    kind = ScoreKind(kind)
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    rows: list[BenchRow] = []
    for T in T_list:
        if T < 1:
            raise ValueError("sequence lengths must be >= 1")
        H = seeded_rng(seed, "bench", T).standard_normal((T, d))
        params = init_score_params(kind, d, seed=seed)
        sec, best, peak = _measure(lambda: attend_global(H, params, kind), repetitions)
        rows.append(BenchRow(T=T, mode="global", width=None, kind=kind.value, d=d,
                             median_seconds=sec, min_seconds=best, peak_bytes=peak))
        for L in L_list:
            cfg = AttentionConfig(kind=kind, width=int(L), d=d)
            sec, best, peak = _measure(lambda: attend_windowed(H, cfg, params), repetitions)
            rows.append(BenchRow(T=T, mode="banded", width=int(L), kind=kind.value,
                                 d=d, median_seconds=sec, min_seconds=best, peak_bytes=peak))
    return rows


def rows_to_csv(rows: list[BenchRow], fileobj) -> None:
    fileobj.write("T,mode,width,kind,d,median_seconds,min_seconds,peak_bytes\n")
    for r in rows:
        width = "" if r.width is None else str(r.width)
        fileobj.write(f"{r.T},{r.mode},{width},{r.kind},{r.d},"
                      f"{r.median_seconds:.6f},{r.min_seconds:.6f},{r.peak_bytes}\n")


def rows_to_text(rows: list[BenchRow]) -> str:
    header = f"{'T':>6}  {'mode':<7} {'width':>5}  {'kind':<10} {'median (ms)':>12}  {'peak (MB)':>10}"
    lines = [header, "-" * len(header)]
    for r in rows:
        width = "-" if r.width is None else str(r.width)
        lines.append(f"{r.T:>6}  {r.mode:<7} {width:>5}  {r.kind:<10} "
                     f"{r.median_seconds * 1e3:>12.2f}  {r.peak_bytes / 1e6:>10.2f}")
    return "\n".join(lines)


def rows_to_csv_string(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    rows_to_csv(rows, buf)
    return buf.getvalue()
