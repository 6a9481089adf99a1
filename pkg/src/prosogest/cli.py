"""Command-line pipeline driver.

Subcommands: ``generate`` (synthetic corpus), ``train`` (prominence +
HMM + co-occurrence models), ``recognize`` (gesture-only or fused
decoding with optional scoring) and ``score`` (compare two
segmentations).  Exit codes: 0 success, 2 configuration error, 3
insufficient class data during training, 4 missing models.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from . import pipeline
from .config import default_config, load_config
from .errors import ConfigError, InsufficientClassData, MissingModels, ProsogestError
from .fusion_eval import score as score_segmentations
from .corpus import records_to_reference, write_corpus
from .kinematics import dump_kinematics_csv
from .pitch import dump_f0_csv
from .signal_io import read_phoneme_records, write_json, write_phoneme_records

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CLASS_DATA = 3
EXIT_MISSING_MODELS = 4


def _load_cfg(args):
    cfg = default_config() if args.config is None else load_config(args.config)
    if getattr(args, "jobs", None):
        cfg = dataclasses.replace(cfg, jobs=args.jobs)
    return cfg


def cmd_generate(args) -> int:
    cfg = _load_cfg(args)
    manifest = write_corpus(cfg.corpus, args.out)
    print(f"wrote {len(manifest['recordings'])} recordings to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    manifest = pipeline.load_manifest(args.corpus)
    recordings = pipeline.select_recordings(manifest, args.corpus, args.split, cfg)
    models = pipeline.train_models(cfg, recordings)
    models.save(args.models)
    print(f"trained on {len(recordings)} recordings -> {args.models}")
    return EXIT_OK


def _report_line(breakdown, mode):
    return (
        f"{mode}: hits {breakdown.hits_pct:.1f}%  deletions "
        f"{breakdown.deletion_pct:.1f}%  substitutions {breakdown.substitution_pct:.1f}%  "
        f"insertions {breakdown.insertion_pct:.1f}%  (n={breakdown.n_reference})"
    )


def cmd_recognize(args) -> int:
    cfg = _load_cfg(args)
    models = pipeline.Models.load(args.models)
    os.makedirs(args.out, exist_ok=True)

    if args.wav:
        entries = [
            {
                "id": os.path.splitext(os.path.basename(args.wav))[0],
                "wav": args.wav,
                "trajectory": args.trajectory,
                "reference": args.reference,
                "speaker_id": cfg.speaker_id,
            }
        ]
    else:
        manifest = pipeline.load_manifest(args.corpus)
        entries = pipeline.select_recordings(manifest, args.corpus, args.split, cfg)

    if args.dump_f0 or args.dump_kinematics:
        if len(entries) != 1:
            raise ConfigError("--dump-f0/--dump-kinematics need a single recording")
        rec = pipeline.analyze_recording(
            entries[0]["wav"], entries[0]["trajectory"], cfg,
            entries[0].get("reference"), entries[0].get("speaker_id", cfg.speaker_id),
        )
        if args.dump_f0:
            dump_f0_csv(rec.contour, args.dump_f0)
        if args.dump_kinematics:
            dump_kinematics_csv(rec.kinematics, args.dump_kinematics)
        intervals, breakdown = pipeline.recognize_recording(cfg, models, rec, args.mode)
        results = [(entries[0]["id"], intervals, breakdown)]
        totals = breakdown
    else:
        results, totals = pipeline.recognize_many(cfg, models, entries, args.mode)

    for rec_id, intervals, _ in results:
        out_path = os.path.join(args.out, f"{rec_id}.{args.mode}.jsonl")
        write_phoneme_records([iv.to_record() for iv in intervals], out_path)

    report_path = os.path.join(args.out, f"report.{args.mode}.json")
    if totals is not None:
        write_json(totals.to_report(args.mode), report_path)
        print(_report_line(totals, args.mode))
    else:
        print(f"{args.mode}: {sum(len(r[1]) for r in results)} phonemes "
              "(no reference, breakdown omitted)")
    return EXIT_OK


def cmd_score(args) -> int:
    hypothesis = records_to_reference(read_phoneme_records(args.hypothesis))
    reference = records_to_reference(read_phoneme_records(args.reference))
    breakdown = score_segmentations(hypothesis, reference)
    if args.out:
        write_json(breakdown.to_report(args.mode), args.out)
    print(_report_line(breakdown, args.mode))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prosogest",
        description="Prosody/gesture co-analysis pipeline",
    )
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render a synthetic corpus")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out", required=True, help="corpus output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit models from a corpus")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--corpus", required=True, help="corpus directory with manifest.json")
    p.add_argument("--models", required=True, help="model output directory")
    p.add_argument("--split", choices=["train", "test", "all"], default="train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recognize", help="decode recordings and score them")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--models", required=True, help="model directory")
    p.add_argument("--mode", choices=["gesture-only", "fused"], default="fused")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--corpus", help="corpus directory (batch mode)")
    p.add_argument("--split", choices=["train", "test", "all"], default="test")
    p.add_argument("--wav", help="single recording: WAV path")
    p.add_argument("--trajectory", help="single recording: trajectory CSV path")
    p.add_argument("--reference", help="single recording: reference JSONL path")
    p.add_argument("--dump-f0", help="write the consumed F0 contour as CSV")
    p.add_argument("--dump-kinematics", help="write the consumed features as CSV")
    p.add_argument("--jobs", type=int, help="parallel recordings (overrides config)")
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("score", help="score a hypothesis against a reference")
    p.add_argument("--hypothesis", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--mode", default="external", help="mode tag for the report")
    p.add_argument("--out", help="report JSON path")
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if getattr(args, "command", None) == "recognize":
        if not args.wav and not args.corpus:
            print("recognize needs --wav/--trajectory or --corpus", file=sys.stderr)
            return EXIT_CONFIG
        if args.wav and not args.trajectory:
            print("--wav requires --trajectory", file=sys.stderr)
            return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientClassData as exc:
        print(f"insufficient class data: {exc}", file=sys.stderr)
        return EXIT_CLASS_DATA
    except MissingModels as exc:
        print(f"missing models: {exc}", file=sys.stderr)
        return EXIT_MISSING_MODELS
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProsogestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
