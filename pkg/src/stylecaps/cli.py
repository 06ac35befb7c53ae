"""Command-line entry point: ``stylecaps <stage> ...``.

Exit codes: 0 success, 1 fatal stage error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from stylecaps.backends.base import BackendError
from stylecaps.config import ConfigError, load_config
from stylecaps.corpus import ManifestError, write_jsonl, write_manifest
from stylecaps.pipeline import STAGES, StageContext, StageOutcome, run_pipeline, run_stage

EXIT_OK, EXIT_FATAL, EXIT_CONFIG = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep argparse's exit code 2 but let main() report it
        raise _UsageError(message)


def _csv(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="YAML or JSON pipeline config")
    parser.add_argument("--seed", type=int, default=default, help="override the global seed")
    parser.add_argument(
        "--mock-backends", action="store_true", default=argparse.SUPPRESS if suppress else False,
        help="bind every backend role to its deterministic mock",
    )
    parser.add_argument(
        "--force", action="store_true", default=argparse.SUPPRESS if suppress else False,
        help="rerun stages even when outputs are up to date",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stylecaps", description="Style-tag dataset construction pipeline.")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def stage(name, help_text, **kw):
        p = sub.add_parser(name, help=help_text, parents=[common], **kw)
        return p

    def io(p, in_help="input manifest", out_help="output manifest"):
        p.add_argument("input", help=in_help)
        p.add_argument("output", help=out_help)

    p = stage("make-synthetic", "write a seeded synthetic corpus, annotations and mock config")
    p.add_argument("out_dir")
    p.add_argument("--n-voxceleb", type=int, default=24)
    p.add_argument("--n-emilia", type=int, default=30)

    io(stage("preprocess", "duration, language and speaker filters"))

    p = stage("aggregate-annotations", "consensus intrinsic tags from crowd annotations")
    io(p)
    p.add_argument("--annotations", required=True, help="JSONL rows {speaker_id, annotator_id, tags}")
    p.add_argument("--split-kind", choices=("train_dev", "holdout"))

    p = stage("scale-intrinsic", "propagate intrinsic tags to similar-sounding speakers")
    io(p)
    p.add_argument("--threshold", type=float)
    p.add_argument("--clips-per-speaker", type=int)

    p = stage("scale-situational", "expressivity, semantic and acoustic matching")
    io(p)
    p.add_argument("--emotions", type=_csv, help="comma-separated emotion tags (default: all)")
    p.add_argument("--top-k", type=int)
    for flag in ("expressivity", "semantic", "acoustic"):
        p.add_argument(f"--skip-{flag}", action="store_true", default=None)

    io(stage("tag-basic", "gender, pitch, speed and noise tags"))
    io(stage("build-splits", "train/dev/holdout assignment"))
    io(stage("gen-prompts", "style prompts per record"), out_help="output prompt-set JSONL")
    io(stage("build-eval", "tag-balanced evaluation set from holdout"), out_help="output eval JSONL")

    p = stage("build-compositional", "intrinsic x situational x gender evaluation set")
    io(p, out_help="output JSONL")
    p.add_argument("--transcripts", help="text file with one candidate transcript per line (replaces the manifest pool)")

    p = stage("build-mixture", "upsampled training mixture from the train split")
    io(p, out_help="output mixture JSONL")
    p.add_argument("--regularization", help="manifest of an extra regularization corpus")
    p.add_argument("--regularization-hours", type=float)

    p = stage("score", "metrics, tables and figures from rater responses")
    io(p, in_help="rater responses JSONL", out_help="report directory")
    p.add_argument("--item-majority", action="store_true", default=None)
    p.add_argument("--no-figures", dest="figures", action="store_false", default=None)

    p = stage("run-pipeline", "run every stage from raw manifest to mixture")
    p.add_argument("input")
    p.add_argument("workdir")
    p.add_argument("--annotations", required=True)
    p.add_argument("--regularization")
    return parser


def _stage_args(args: argparse.Namespace) -> tuple[dict, dict]:
    cmd = args.command
    inputs = {"manifest": args.input}
    overrides: dict = {}
    if cmd == "aggregate-annotations":
        inputs["annotations"] = args.annotations
        overrides["split_kind"] = args.split_kind
    elif cmd == "scale-intrinsic":
        overrides.update(threshold=args.threshold, clips_per_speaker=args.clips_per_speaker)
    elif cmd == "scale-situational":
        overrides.update(
            emotions=args.emotions,
            top_k=args.top_k,
            skip_expressivity=args.skip_expressivity,
            skip_semantic=args.skip_semantic,
            skip_acoustic=args.skip_acoustic,
        )
    elif cmd == "build-compositional":
        if args.transcripts:
            inputs = {"transcripts": args.transcripts}
    elif cmd == "build-mixture":
        inputs["regularization"] = args.regularization
        overrides["regularization_hours"] = args.regularization_hours
    elif cmd == "score":
        inputs = {"responses": args.input}
        overrides.update(item_majority=args.item_majority, figures=args.figures)
    return inputs, overrides


def _report(outcome: StageOutcome) -> None:
    c = outcome.counts
    state = "up to date" if outcome.skipped else "done"
    flow = f"{c['in']} -> {c['out']}" if "in" in c and "out" in c and not isinstance(c["out"], list) else ""
    print(f"{outcome.stage}: {state} {flow}".rstrip())


def _make_synthetic(args, seed: int) -> None:
    from stylecaps.synthetic import make_synthetic_corpus

    corpus = make_synthetic_corpus(seed=seed, n_voxceleb=args.n_voxceleb, n_emilia=args.n_emilia)
    out = Path(args.out_dir)
    write_manifest(corpus.records, out / "corpus.jsonl")
    write_jsonl(corpus.annotations, out / "annotations.jsonl")
    config = {
        "seed": seed,
        "scale_situational": {"emotions": list(corpus.emotions)},
        "splits": {"holdout_speakers": 8},
    }
    (out / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=True), encoding="utf-8")
    print(f"make-synthetic: {len(corpus.records)} records, {len(corpus.annotations)} annotation rows")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"stylecaps: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    level = logging.WARNING - 10 * min(getattr(args, "verbose", 0) or 0, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        config = load_config(getattr(args, "config", None))
        if getattr(args, "seed", None) is not None:
            config.seed = args.seed
        ctx = StageContext(config, getattr(args, "mock_backends", False), getattr(args, "force", False))

        if args.command == "make-synthetic":
            _make_synthetic(args, config.seed)
        elif args.command == "run-pipeline":
            for outcome in run_pipeline(ctx, args.input, args.annotations, args.workdir, args.regularization):
                _report(outcome)
        else:
            inputs, overrides = _stage_args(args)
            _report(run_stage(args.command, ctx, inputs, args.output, overrides))
    except ConfigError as exc:
        print(f"stylecaps: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ManifestError, BackendError, ValueError, KeyError, OSError) as exc:
        print(f"stylecaps: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FATAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
