"""Segment-based and event-based detection metrics, micro-averaged.

Segment scoring marks a class active in a 1 s segment when any event of
that class overlaps the segment with strictly positive duration, then
aggregates TP/FP/FN (and per-segment substitutions/deletions/insertions
for the error rate) over all clips and classes.

Event scoring matches predicted events to reference events of the same
class, within each clip, by onset only: a pair may match when
|onset_pred - onset_ref| <= collar (default 250 ms). Matching is
one-to-one and maximizes the number of matches; a greedy sweep over
onset-sorted events achieves the maximum because each event's compatible
partners form a contiguous onset interval. Error rate counts unmatched
reference events as deletions and unmatched predictions as insertions,
normalized by the reference count; cross-class substitution accounting is
off by default and can be enabled.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EventAnnotation",
    "SegmentActivity",
    "MetricsReport",
    "ClassF1",
    "ParseError",
    "segment_rollup",
    "events_to_frame_roll",
    "segment_metrics",
    "event_metrics",
    "classwise_event_f",
    "read_annotations",
    "write_annotations",
]

log = logging.getLogger("sedattn")


class ParseError(ValueError):
    """Malformed annotation file; message carries the line number."""


@dataclass(frozen=True)
class EventAnnotation:
    label: str
    onset: float
    offset: float

    def __post_init__(self):
        if self.onset < 0:
            raise ValueError(f"onset must be >= 0, got {self.onset}")
        if self.offset <= self.onset:
            raise ValueError(f"offset must exceed onset, got [{self.onset}, {self.offset}]")


@dataclass
class SegmentActivity:
    """Boolean activity per (segment, class) for one clip."""

    active: np.ndarray  # (n_segments, n_classes) bool
    segment_length: float
    classes: tuple[str, ...]

    def __post_init__(self):
        self.active = np.asarray(self.active, dtype=bool)
        if self.active.ndim != 2 or self.active.shape[1] != len(self.classes):
            raise ValueError("activity matrix must be (segments, classes)")


@dataclass
class ClassF1:
    label: str
    f1: float  # percent
    tp: int
    fp: int
    fn: int
    defined: bool  # False when the class has no reference and no predicted events


@dataclass
class MetricsReport:
    f1: float  # percent
    error_rate: float
    tp: int
    fp: int
    fn: int
    n_ref: int
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    f1_defined: bool = True
    per_class: dict[str, ClassF1] = field(default_factory=dict)


def _f1_percent(tp: int, fp: int, fn: int) -> tuple[float, bool]:
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0, False
    return 100.0 * 2 * tp / denom, True


def _error_rate(s: int, d: int, i: int, n_ref: int) -> float:
    if n_ref == 0:
        return 0.0 if (s + d + i) == 0 else math.inf
    return (s + d + i) / n_ref


# ---------------------------------------------------------------------------
# segment-based
# ---------------------------------------------------------------------------

def segment_rollup(events, clip_duration: float, segment_length: float = 1.0,
                   classes=()) -> SegmentActivity:
    """Per-segment class activity for one clip.

    Cell (k, c) is true iff class c has an event overlapping segment
    [k*len, (k+1)*len) with strictly positive overlap; an event ending
    exactly on a boundary does not activate the next segment.
    """
    if segment_length <= 0:
        raise ValueError("segment length must be > 0")
    if clip_duration <= 0:
        raise ValueError("clip duration must be > 0")
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    n_seg = math.ceil(clip_duration / segment_length)
    active = np.zeros((n_seg, len(classes)), dtype=bool)
    for ev in events:
        if ev.onset > clip_duration or ev.offset > clip_duration + 1e-9:
            raise ValueError(
                f"event [{ev.onset}, {ev.offset}] lies outside the {clip_duration} s clip")
        if ev.label not in index:
            raise ValueError(f"event label {ev.label!r} not in class vocabulary")
        first = int(ev.onset / segment_length)
        last = min(n_seg - 1, int(np.ceil(ev.offset / segment_length)) - 1)
        for k in range(first, last + 1):
            lo, hi = k * segment_length, (k + 1) * segment_length
            if min(ev.offset, hi) - max(ev.onset, lo) > 0:
                active[k, index[ev.label]] = True
    return SegmentActivity(active=active, segment_length=segment_length, classes=classes)


def events_to_frame_roll(events, clip_duration: float, frame_rate: float,
                         classes=()) -> np.ndarray:
    """Binary (T, C) frame-activity matrix from strong labels.

    A frame [f/rate, (f+1)/rate) is active for a class iff some event of
    that class overlaps it with positive duration (same rule as
    segment_rollup at segment length 1/rate).
    """
    if frame_rate <= 0:
        raise ValueError("frame rate must be > 0")
    T = round(clip_duration * frame_rate)
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    roll = np.zeros((T, len(classes)), dtype=np.float64)
    edges = np.arange(T + 1) / frame_rate
    for ev in events:
        if ev.label not in index:
            raise ValueError(f"event label {ev.label!r} not in class vocabulary")
        hit = (edges[:-1] < ev.offset) & (edges[1:] > ev.onset)
        roll[hit, index[ev.label]] = 1.0
    return roll


def segment_metrics(ref: list[SegmentActivity], pred: list[SegmentActivity]) -> MetricsReport:
    """Micro-averaged segment F1 and error rate over a clip collection."""
    if len(ref) != len(pred):
        raise ValueError(f"{len(ref)} reference clips vs {len(pred)} predicted")
    tp = fp = fn = 0
    subs = dels = ins = 0
    n_ref = 0
    for i, (r, p) in enumerate(zip(ref, pred)):
        if r.active.shape != p.active.shape:
            raise ValueError(f"clip {i}: activity shapes differ "
                             f"({r.active.shape} vs {p.active.shape})")
        both = r.active & p.active
        tp += int(both.sum())
        seg_fp = (p.active & ~r.active).sum(axis=1)
        seg_fn = (r.active & ~p.active).sum(axis=1)
        fp += int(seg_fp.sum())
        fn += int(seg_fn.sum())
        subs += int(np.minimum(seg_fn, seg_fp).sum())
        dels += int(np.maximum(0, seg_fn - seg_fp).sum())
        ins += int(np.maximum(0, seg_fp - seg_fn).sum())
        n_ref += int(r.active.sum())
    f1, defined = _f1_percent(tp, fp, fn)
    return MetricsReport(
        f1=f1, error_rate=_error_rate(subs, dels, ins, n_ref),
        tp=tp, fp=fp, fn=fn, n_ref=n_ref,
        substitutions=subs, deletions=dels, insertions=ins, f1_defined=defined)


# ---------------------------------------------------------------------------
# event-based
# ---------------------------------------------------------------------------

def match_onsets(ref_onsets, pred_onsets, collar: float) -> int:
    """Maximum number of one-to-one |ref - pred| <= collar matches.

    Greedy over sorted onsets: each prediction takes the earliest
    still-unmatched compatible reference, which is optimal here because
    compatibility sets are intervals in the sorted order.
    """
    if collar < 0:
        raise ValueError("collar must be >= 0")
    refs = sorted(ref_onsets)
    preds = sorted(pred_onsets)
    matched = 0
    i = 0
    for p in preds:
        while i < len(refs) and refs[i] < p - collar:
            i += 1
        if i < len(refs) and abs(refs[i] - p) <= collar:
            matched += 1
            i += 1
    return matched


def _clip_class_onsets(events):
    by_class: dict[str, list[float]] = {}
    for ev in events:
        by_class.setdefault(ev.label, []).append(ev.onset)
    return by_class


def event_metrics(ref: list[list[EventAnnotation]], pred: list[list[EventAnnotation]],
                  collar: float = 0.25, count_substitutions: bool = False) -> MetricsReport:
    """Micro-averaged event F1 and error rate, onset matching only.

    With ``count_substitutions`` enabled, leftover predictions are matched
    across classes to leftover references (per clip, same collar) and each
    such pair counts as one substitution instead of a deletion plus an
    insertion; F1 counts stay class-strict either way.
    """
    if collar < 0:
        raise ValueError("collar must be >= 0")
    if len(ref) != len(pred):
        raise ValueError(f"{len(ref)} reference clips vs {len(pred)} predicted")
    tp = fp = fn = 0
    subs = 0
    n_ref = 0
    for r_events, p_events in zip(ref, pred):
        r_by = _clip_class_onsets(r_events)
        p_by = _clip_class_onsets(p_events)
        clip_fn_onsets: list[float] = []
        clip_fp_onsets: list[float] = []
        for label in set(r_by) | set(p_by):
            r_on = r_by.get(label, [])
            p_on = p_by.get(label, [])
            m = match_onsets(r_on, p_on, collar)
            tp += m
            fp += len(p_on) - m
            fn += len(r_on) - m
            if count_substitutions:
                # leftovers, for cross-class substitution pairing
                clip_fn_onsets.extend(sorted(r_on)[m:])
                clip_fp_onsets.extend(sorted(p_on)[m:])
        if count_substitutions:
            subs += match_onsets(clip_fn_onsets, clip_fp_onsets, collar)
        n_ref += len(r_events)
    f1, defined = _f1_percent(tp, fp, fn)
    dels = fn - subs
    ins = fp - subs
    return MetricsReport(
        f1=f1, error_rate=_error_rate(subs, dels, ins, n_ref),
        tp=tp, fp=fp, fn=fn, n_ref=n_ref,
        substitutions=subs, deletions=dels, insertions=ins, f1_defined=defined)


def classwise_event_f(ref, pred, collar: float = 0.25, classes=None) -> dict[str, ClassF1]:
    """Per-class event F1 (no cross-class aggregation).

    ``classes`` defaults to every label seen in either side; labels seen
    only in predictions count as FP for that label. A class with neither
    reference nor predicted events reports F1 = 0 flagged undefined.
    """
    if classes is None:
        seen = set()
        for clip in list(ref) + list(pred):
            seen.update(ev.label for ev in clip)
        classes = sorted(seen)
    out: dict[str, ClassF1] = {}
    for label in classes:
        tp = fp = fn = 0
        for r_events, p_events in zip(ref, pred):
            r_on = [ev.onset for ev in r_events if ev.label == label]
            p_on = [ev.onset for ev in p_events if ev.label == label]
            m = match_onsets(r_on, p_on, collar)
            tp += m
            fp += len(p_on) - m
            fn += len(r_on) - m
        f1, defined = _f1_percent(tp, fp, fn)
        out[label] = ClassF1(label=label, f1=f1, tp=tp, fp=fp, fn=fn, defined=defined)
    return out


# ---------------------------------------------------------------------------
# annotation files
# ---------------------------------------------------------------------------

_HEADER = ["clip_id", "label", "onset", "offset"]


def read_annotations(path) -> dict[str, list[EventAnnotation]]:
    """Annotation CSV (clip_id,label,onset,offset) -> events per clip id."""
    clips: dict[str, list[EventAnnotation]] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: line 1: empty file, expected header {_HEADER}")
        if [c.strip() for c in header] != _HEADER:
            raise ParseError(f"{path}: line 1: expected header {_HEADER}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"{path}: line {lineno}: expected 4 columns, got {len(row)}")
            clip_id, label = row[0].strip(), row[1].strip()
            try:
                onset, offset = float(row[2]), float(row[3])
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: onset/offset must be numbers")
            try:
                ev = EventAnnotation(label=label, onset=onset, offset=offset)
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}")
            clips.setdefault(clip_id, []).append(ev)
    return clips


def write_annotations(path, clips: dict[str, list[EventAnnotation]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(_HEADER)
        for clip_id in clips:
            for ev in clips[clip_id]:
                writer.writerow([clip_id, ev.label, repr(ev.onset), repr(ev.offset)])
