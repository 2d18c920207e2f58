"""Experiment runner: trains a list of model variants on one synthetic
dataset and reports segment/event F1 and error rate per variant, plus
class-wise event F1.

Every variant shares the identical dataset and the identical initial
encoder/GRU/classifier weights (parameter streams are keyed by name, not by
draw order), so variants differ only in their attention stage; the runner
asserts this with a parameter checksum before training. A results table is
written as JSON, aligned text, and CSV; all timing information goes to a
separate metadata file so result files are byte-reproducible.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import NumericError
from .metrics import (
    MetricsReport,
    classwise_event_f,
    event_metrics,
    read_annotations,
    segment_metrics,
    segment_rollup,
)
from .model import ModelConfig, SedModel, save_model
from .soundscapes import (
    DatasetSplits,
    SoundscapeConfig,
    clip_frame_targets,
    duration_skew_profile,
    generate_dataset,
    load_dataset,
)
from .training import TrainConfig, train_model

__all__ = [
    "VariantSpec",
    "parse_variant",
    "ExperimentSpec",
    "VariantResult",
    "ResultTable",
    "run_experiment",
    "score_files",
    "params_checksum",
    "DEFAULT_VARIANTS",
]

log = logging.getLogger("sedattn")

# the ablation's seven standard rows
DEFAULT_VARIANTS = ("baseline", "selfattn", "selfattn_2", "selfattn_10",
                    "selfattn_50", "selfattn_100", "multihead")


@dataclass(frozen=True)
class VariantSpec:
    token: str
    display: str
    attention: str
    width: int = 50
    n_heads: int = 11
    first_width: int = 2
    width_step: int = 5


def parse_variant(token: str) -> VariantSpec:
    """Variant tokens: baseline | selfattn | selfattn_<L> |
    multihead[_<p>[_<first>[_<step>]]]."""
    t = token.strip().lower()
    if t == "baseline":
        return VariantSpec(token=t, display="Baseline", attention="none")
    if t == "selfattn":
        return VariantSpec(token=t, display="SelfAttn", attention="global")
    if t.startswith("selfattn_"):
        try:
            width = int(t.split("_", 1)[1])
        except ValueError:
            raise ValueError(f"bad variant token {token!r}: width must be an integer")
        if width < 1:
            raise ValueError(f"bad variant token {token!r}: width must be >= 1")
        return VariantSpec(token=t, display=f"SelfAttn_{width}", attention="windowed",
                           width=width)
    if t == "multihead" or t.startswith("multihead_"):
        parts = t.split("_")[1:]
        vals = [11, 2, 5]
        try:
            for i, part in enumerate(parts[:3]):
                vals[i] = int(part)
        except ValueError:
            raise ValueError(f"bad variant token {token!r}")
        return VariantSpec(token=t, display="MultiHead", attention="multihead",
                           n_heads=vals[0], first_width=vals[1], width_step=vals[2])
    raise ValueError(f"unknown variant token {token!r}")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one experiment byte for byte."""

    variants: tuple[str, ...] = DEFAULT_VARIANTS
    seed: int = 0
    dataset_dir: str | None = None  # load instead of generating
    dataset: SoundscapeConfig = SoundscapeConfig()
    duration_profile: str | None = None  # short | long | mixed; None keeps dataset's range
    n_train: int = 120
    n_val: int = 40
    n_test: int = 60
    hidden_dim: int = 32
    score_kind: str = "additive"
    attn_dim: int | None = None
    threshold: float = 0.5
    epochs: int = 8
    lr: float = 0.001
    decay: float = 1e-6
    collar: float = 0.25
    segment_length: float = 1.0
    select_metric: str = "event_f1"
    n_jobs: int = 1

    def __post_init__(self):
        if not self.variants:
            raise ValueError("at least one variant is required")
        for token in self.variants:
            parse_variant(token)
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ValueError("split sizes must be >= 1")

    def effective_dataset_config(self) -> SoundscapeConfig:
        cfg = self.dataset
        if self.duration_profile is not None:
            cfg = duration_skew_profile(self.duration_profile)(cfg)
        return dataclasses.replace(cfg, seed=self.seed)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["variants"] = list(self.variants)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        if "dataset" in d and isinstance(d["dataset"], dict):
            d["dataset"] = SoundscapeConfig(**d["dataset"])
        if "variants" in d:
            d["variants"] = tuple(d["variants"])
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentSpec":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass
class VariantResult:
    token: str
    display: str
    status: str  # "ok" | "failed"
    segment_f1: float | None = None
    event_f1: float | None = None
    segment_er: float | None = None
    event_er: float | None = None
    classwise_event_f1: dict = field(default_factory=dict)
    best_epoch: int | None = None
    n_parameters: int | None = None
    train_loss: list[float] = field(default_factory=list)
    val_f1: list[float] = field(default_factory=list)
    error: str | None = None


@dataclass
class ResultTable:
    seed: int
    config_hash: str
    class_names: list[str]
    variants: list[VariantResult]

    def to_dict(self) -> dict:
        return {
            "format": "sedattn-results",
            "version": 1,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "class_names": self.class_names,
            "variants": [dataclasses.asdict(v) for v in self.variants],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        head = f"{'Model':<14} {'F1% Seg':>8} {'F1% Evt':>8} {'ER Seg':>7} {'ER Evt':>7}"
        lines = [head, "-" * len(head)]
        for v in self.variants:
            if v.status != "ok":
                lines.append(f"{v.display:<14} {'failed: ' + (v.error or '?')}")
                continue
            lines.append(f"{v.display:<14} {v.segment_f1:>8.2f} {v.event_f1:>8.2f} "
                         f"{v.segment_er:>7.2f} {v.event_er:>7.2f}")
        ok = [v for v in self.variants if v.status == "ok"]
        if ok:
            lines.append("")
            lines.append("class-wise event F1 (%):")
            chead = f"{'class':<12}" + "".join(f" {v.display:>13}" for v in ok)
            lines.append(chead)
            lines.append("-" * len(chead))
            for label in self.class_names:
                row = f"{label:<12}"
                for v in ok:
                    cell = v.classwise_event_f1.get(label)
                    row += f" {cell['f1']:>13.2f}" if cell else f" {'-':>13}"
                lines.append(row)
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["variant,segment_f1,event_f1,segment_er,event_er,status"]
        for v in self.variants:
            if v.status == "ok":
                lines.append(f"{v.display},{v.segment_f1:.4f},{v.event_f1:.4f},"
                             f"{v.segment_er:.4f},{v.event_er:.4f},ok")
            else:
                lines.append(f"{v.display},,,,,failed")
        return "\n".join(lines) + "\n"

    def get(self, token: str) -> VariantResult:
        for v in self.variants:
            if v.token == token:
                return v
        raise KeyError(token)


def params_checksum(params: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(params[name].tobytes())
    return h.hexdigest()


def _model_config(spec: ExperimentSpec, variant: VariantSpec,
                  n_features: int, n_classes: int) -> ModelConfig:
    return ModelConfig(
        n_features=n_features, hidden_dim=spec.hidden_dim, n_classes=n_classes,
        attention=variant.attention, width=variant.width, score_kind=spec.score_kind,
        attn_dim=spec.attn_dim, n_heads=variant.n_heads,
        first_width=variant.first_width, width_step=variant.width_step,
        threshold=spec.threshold, seed=spec.seed)


def _train_config(spec: ExperimentSpec, frame_rate: float) -> TrainConfig:
    return TrainConfig(epochs=spec.epochs, lr=spec.lr, decay=spec.decay,
                       seed=spec.seed, collar=spec.collar, frame_rate=frame_rate,
                       select_metric=spec.select_metric)


def _load_or_generate(spec: ExperimentSpec) -> DatasetSplits:
    if spec.dataset_dir is not None:
        return load_dataset(spec.dataset_dir)
    return generate_dataset(spec.effective_dataset_config(),
                            n_train=spec.n_train, n_val=spec.n_val, n_test=spec.n_test)


def _evaluate(model: SedModel, clips, classes, collar, segment_length):
    refs = [c.events for c in clips]
    preds = [model.predict_events(c.features, c.frame_rate, classes) for c in clips]
    ev = event_metrics(refs, preds, collar=collar)
    seg_ref = [segment_rollup(r, c.duration, segment_length, classes)
               for r, c in zip(refs, clips)]
    seg_pred = [segment_rollup(p, c.duration, segment_length, classes)
                for p, c in zip(preds, clips)]
    seg = segment_metrics(seg_ref, seg_pred)
    per_class = classwise_event_f(refs, preds, collar=collar, classes=classes)
    classwise = {label: {"f1": cf.f1, "defined": cf.defined}
                 for label, cf in per_class.items()}
    return seg, ev, classwise


def _run_variant(spec: ExperimentSpec, token: str, out_dir: str | None,
                 dataset: DatasetSplits | None = None) -> VariantResult:
    variant = parse_variant(token)
    if dataset is None:
        dataset = _load_or_generate(spec)
    classes = dataset.config.class_names
    train_xy = [(c.features, clip_frame_targets(c, classes)) for c in dataset.train]
    val_xy = [(c.features, clip_frame_targets(c, classes)) for c in dataset.val]
    model = SedModel(_model_config(spec, variant, dataset.config.n_features,
                                   dataset.config.n_classes))
    result = VariantResult(token=variant.token, display=variant.display, status="ok",
                           n_parameters=model.n_parameters())
    try:
        history = train_model(model, train_xy, val_xy,
                              _train_config(spec, dataset.config.frame_rate))
    except NumericError as exc:
        log.warning("variant %s failed to train: %s", variant.display, exc)
        result.status = "failed"
        result.error = str(exc)
        return result
    result.train_loss = history.train_loss
    result.val_f1 = history.val_f1
    result.best_epoch = history.best_epoch
    seg, ev, classwise = _evaluate(model, dataset.test, classes,
                                   spec.collar, spec.segment_length)
    result.segment_f1 = seg.f1
    result.event_f1 = ev.f1
    result.segment_er = seg.error_rate
    result.event_er = ev.error_rate
    result.classwise_event_f1 = classwise
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_model(model, out / f"checkpoint_{variant.token}.json")
        with open(out / f"history_{variant.token}.json", "w") as f:
            json.dump({"train_loss": history.train_loss, "val_f1": history.val_f1,
                       "best_epoch": history.best_epoch}, f, sort_keys=True, indent=2)
    return result


def _assert_shared_init(spec: ExperimentSpec, dataset: DatasetSplits) -> None:
    sums = set()
    for token in spec.variants:
        model = SedModel(_model_config(spec, parse_variant(token),
                                       dataset.config.n_features,
                                       dataset.config.n_classes))
        sums.add(params_checksum(model.non_attention_params()))
    if len(sums) != 1:
        raise RuntimeError("variant isolation violated: non-attention initial "
                           "parameters differ across variants")


def run_experiment(spec: ExperimentSpec, out_dir=None) -> ResultTable:
    """Train and evaluate every variant in the spec on one shared dataset.

    Writes results.json / results.txt / results.csv, per-variant histories
    and checkpoints, and run_meta.json (timings; kept out of the results
    files so those are byte-identical across reruns) under ``out_dir``.
    """
    t0 = time.perf_counter()
    dataset = _load_or_generate(spec)
    _assert_shared_init(spec, dataset)
    out_str = str(out_dir) if out_dir is not None else None

    durations: dict[str, float] = {}
    results: list[VariantResult] = []
    if spec.n_jobs > 1 and len(spec.variants) > 1:
        with ProcessPoolExecutor(max_workers=spec.n_jobs) as pool:
            futures = {token: pool.submit(_run_variant, spec, token, out_str)
                       for token in spec.variants}
            for token in spec.variants:
                t1 = time.perf_counter()
                results.append(futures[token].result())
                durations[token] = time.perf_counter() - t1
    else:
        for token in spec.variants:
            t1 = time.perf_counter()
            results.append(_run_variant(spec, token, out_str, dataset=dataset))
            durations[token] = time.perf_counter() - t1

    table = ResultTable(seed=spec.seed, config_hash=spec.config_hash(),
                        class_names=list(dataset.config.class_names),
                        variants=results)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.json").write_text(table.to_json())
        (out / "results.txt").write_text(table.to_text())
        (out / "results.csv").write_text(table.to_csv())
        with open(out / "spec.json", "w") as f:
            json.dump(spec.to_dict(), f, sort_keys=True, indent=2)
        with open(out / "run_meta.json", "w") as f:
            json.dump({"total_seconds": time.perf_counter() - t0,
                       "variant_seconds": durations}, f, sort_keys=True, indent=2)
    return table


# ---------------------------------------------------------------------------
# standalone file scorer
# ---------------------------------------------------------------------------

def score_files(ref_path, pred_path, mode: str = "event", collar: float = 0.25,
                segment_length: float = 1.0, clip_duration: float | None = None,
                count_substitutions: bool = False) -> MetricsReport:
    """Score a prediction annotation CSV against a reference one.

    Clips present only in the predictions are scored against an empty
    reference (pure false positives) with a logged warning. In segment mode
    the clip duration is ``clip_duration`` if given, otherwise the largest
    offset in either file rounded up to a whole segment.
    """
    if mode not in ("segment", "event"):
        raise ValueError(f"mode must be 'segment' or 'event', got {mode!r}")
    ref = read_annotations(ref_path)
    pred = read_annotations(pred_path)
    unknown = sorted(set(pred) - set(ref))
    if unknown:
        log.warning("%d clip id(s) appear only in predictions (counted as false "
                    "positives): %s", len(unknown), ", ".join(unknown[:5]))
    clip_ids = sorted(set(ref) | set(pred))
    ref_lists = [ref.get(cid, []) for cid in clip_ids]
    pred_lists = [pred.get(cid, []) for cid in clip_ids]
    if mode == "event":
        return event_metrics(ref_lists, pred_lists, collar=collar,
                             count_substitutions=count_substitutions)
    classes = sorted({ev.label for events in ref_lists + pred_lists for ev in events})
    seg_ref, seg_pred = [], []
    for r_events, p_events in zip(ref_lists, pred_lists):
        if clip_duration is not None:
            duration = clip_duration
        else:
            longest = max((ev.offset for ev in r_events + p_events), default=segment_length)
            duration = segment_length * max(1, int(np.ceil(longest / segment_length)))
        seg_ref.append(segment_rollup(r_events, duration, segment_length, classes))
        seg_pred.append(segment_rollup(p_events, duration, segment_length, classes))
    return segment_metrics(seg_ref, seg_pred)
