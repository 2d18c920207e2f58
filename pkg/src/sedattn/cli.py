"""Command-line harness.

Subcommands: ``generate`` (synthetic dataset), ``train`` (one variant),
``experiment`` (full ablation from a JSON spec), ``score`` (standalone
metrics over annotation CSVs), ``heatmap`` (attention-weight export), and
``bench`` (banded vs global kernel timings).

Exit codes: 0 success, 1 usage error, 2 data error (unreadable/malformed
files, bad dataset contents), 3 numeric failure. The SEDATTN_LOG
environment variable (DEBUG/INFO/WARNING/ERROR) sets log verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from ._validation import NumericError
from .bench import bench_attention, rows_to_csv_string, rows_to_text
from .experiment import (
    DEFAULT_VARIANTS,
    ExperimentSpec,
    parse_variant,
    run_experiment,
    score_files,
)
from .heatmap import UnsupportedVariantError, export_attention_heatmap
from .metrics import ParseError
from .model import load_model
from .soundscapes import (
    SoundscapeConfig,
    duration_skew_profile,
    generate_dataset,
    load_dataset,
    save_dataset,
)

log = logging.getLogger("sedattn")


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage by default; this harness
    # reserves 2 for data errors, so remap usage problems to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _dataset_config(args) -> SoundscapeConfig:
    if getattr(args, "config", None):
        with open(args.config) as f:
            cfg = SoundscapeConfig(**json.load(f))
    else:
        cfg = SoundscapeConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    profile = getattr(args, "profile", None)
    if profile:
        cfg = duration_skew_profile(profile)(cfg)
    return cfg


def _cmd_generate(args) -> int:
    cfg = _dataset_config(args)
    data = generate_dataset(cfg, n_train=args.n_train, n_val=args.n_val, n_test=args.n_test)
    save_dataset(data, args.out)
    n_events = sum(len(c.events) for s in ("train", "val", "test") for c in data.split(s))
    print(f"wrote {args.n_train}/{args.n_val}/{args.n_test} clips "
          f"({n_events} events, {cfg.n_classes} classes) to {args.out}")
    return 0


def _experiment_spec(args, variants) -> ExperimentSpec:
    base = {}
    if getattr(args, "spec", None):
        spec = ExperimentSpec.from_file(args.spec)
        base = spec.to_dict()
    base["variants"] = tuple(variants)
    for name in ("seed", "epochs", "lr", "decay", "n_train", "n_val", "n_test"):
        value = getattr(args, name, None)
        if value is not None:
            base[name] = value
    if getattr(args, "data", None):
        base["dataset_dir"] = args.data
    if getattr(args, "config", None):
        with open(args.config) as f:
            base["dataset"] = json.load(f)
    if getattr(args, "profile", None):
        base["duration_profile"] = args.profile
    if getattr(args, "jobs", None):
        base["n_jobs"] = args.jobs
    if getattr(args, "score_kind", None):
        base["score_kind"] = args.score_kind
    return ExperimentSpec.from_dict(base)


def _cmd_train(args) -> int:
    token = args.variant
    variant = parse_variant(token)  # validated by the parser already
    if args.width is not None:
        if variant.attention != "windowed":
            raise ValueError("--width only applies to selfattn_<L> variants")
        token = f"selfattn_{args.width}"
    if args.heads is not None:
        if variant.attention != "multihead":
            raise ValueError("--heads only applies to the multihead variant")
        token = f"multihead_{args.heads}"
    spec = _experiment_spec(args, [token])
    table = run_experiment(spec, out_dir=args.out)
    print(table.to_text(), end="")
    return 0


def _cmd_experiment(args) -> int:
    if args.variants:
        variants = [v.strip() for v in args.variants.split(",") if v.strip()]
        for v in variants:
            parse_variant(v)
    elif args.spec:
        variants = ExperimentSpec.from_file(args.spec).variants
    else:
        variants = DEFAULT_VARIANTS
    spec = _experiment_spec(args, variants)
    table = run_experiment(spec, out_dir=args.out)
    print(table.to_text(), end="")
    return 0


def _cmd_score(args) -> int:
    report = score_files(args.ref, args.pred, mode=args.mode, collar=args.collar,
                         segment_length=args.segment_length,
                         clip_duration=args.duration,
                         count_substitutions=args.substitutions)
    payload = {
        "mode": args.mode,
        "f1": report.f1,
        "error_rate": report.error_rate,
        "tp": report.tp, "fp": report.fp, "fn": report.fn,
        "n_ref": report.n_ref,
        "substitutions": report.substitutions,
        "deletions": report.deletions,
        "insertions": report.insertions,
    }
    print(json.dumps(payload, sort_keys=True, indent=2))
    print(f"{args.mode} F1 {report.f1:.2f}%  ER {report.error_rate:.3f}")
    return 0


def _cmd_heatmap(args) -> int:
    model = load_model(args.model)
    data = load_dataset(args.data)
    clips = data.split(args.split)
    if not (0 <= args.index < len(clips)):
        raise ValueError(f"clip index {args.index} out of range for split "
                         f"{args.split!r} with {len(clips)} clips")
    written = export_attention_heatmap(model, clips[args.index], args.out)
    for path in written:
        print(path)
    return 0


def _cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    widths = [int(w) for w in args.widths.split(",")]
    rows = bench_attention(sizes, widths, d=args.dim, kind=args.kind,
                           repetitions=args.reps, seed=args.seed or 0)
    print(rows_to_text(rows))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.csv").write_text(rows_to_csv_string(rows))
        print(f"wrote {out / 'bench.csv'}")
    return 0


def _add_dataset_source(p):
    p.add_argument("--data", help="directory holding a generated dataset")
    p.add_argument("--config", help="JSON file with soundscape-generator settings")
    p.add_argument("--profile", choices=["mixed", "short", "long"],
                   help="event-duration profile for generated data")
    p.add_argument("--n-train", type=int, default=None, dest="n_train")
    p.add_argument("--n-val", type=int, default=None, dest="n_val")
    p.add_argument("--n-test", type=int, default=None, dest="n_test")


def _variant_token(value: str) -> str:
    try:
        parse_variant(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))
    return value


def _variant_list(value: str) -> str:
    tokens = [v.strip() for v in value.split(",") if v.strip()]
    if not tokens:
        raise argparse.ArgumentTypeError("empty variant list")
    for token in tokens:
        _variant_token(token)
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sedattn",
                     description="windowed self-attention sound event detection harness")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON file with SoundscapeConfig fields")
    p.add_argument("--profile", choices=["mixed", "short", "long"], default=None)
    p.add_argument("--n-train", type=int, default=120, dest="n_train")
    p.add_argument("--n-val", type=int, default=40, dest="n_val")
    p.add_argument("--n-test", type=int, default=60, dest="n_test")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train and evaluate one variant")
    p.add_argument("--variant", default="selfattn_50", type=_variant_token,
                   help="baseline | selfattn | selfattn_<L> | multihead")
    p.add_argument("--width", type=int, help="attention width override (windowed)")
    p.add_argument("--heads", type=int, help="head count override (multihead)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--decay", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--score-kind", dest="score_kind",
                   choices=["additive", "general", "dot", "scaled_dot"])
    p.add_argument("--out", help="directory for checkpoint, history, and results")
    _add_dataset_source(p)
    p.set_defaults(func=_cmd_train, spec=None, variants=None, jobs=None)

    p = sub.add_parser("experiment", help="run a multi-variant ablation")
    p.add_argument("--spec", help="experiment spec JSON file")
    p.add_argument("--variants", type=_variant_list,
                   help="comma-separated variant tokens (overrides spec)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--decay", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None, help="train variants in parallel")
    p.add_argument("--score-kind", dest="score_kind",
                   choices=["additive", "general", "dot", "scaled_dot"])
    p.add_argument("--out", help="directory for results and artifacts")
    _add_dataset_source(p)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("score", help="score prediction CSV against reference CSV")
    p.add_argument("--ref", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--mode", choices=["segment", "event"], default="event")
    p.add_argument("--collar", type=float, default=0.25)
    p.add_argument("--segment-length", type=float, default=1.0, dest="segment_length")
    p.add_argument("--duration", type=float, default=None,
                   help="fixed clip duration in seconds (segment mode)")
    p.add_argument("--substitutions", action="store_true",
                   help="enable cross-class substitution accounting in event ER")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("heatmap", help="export attention weights for one clip")
    p.add_argument("--model", required=True, help="model checkpoint JSON")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--index", type=int, default=0, help="clip index within the split")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_heatmap)

    p = sub.add_parser("bench", help="time banded vs global attention")
    p.add_argument("--sizes", default="1024,2048,4096", help="comma-separated T values")
    p.add_argument("--widths", default="50", help="comma-separated attention widths")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--kind", choices=["additive", "general", "dot", "scaled_dot"],
                   default="dot")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for bench.csv")
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("SEDATTN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except UnsupportedVariantError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
