"""Stage runners with audit sidecars and hash-based resumability.

Every stage reads one or more input files, writes one output (plus optional
sidecars) and records ``<output>.audit.json``. The audit carries the stage
seed, effective parameters, counts and content hashes but no paths or
timestamps, so identical runs produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

from stylecaps import annotate, basic_tags, evalkit, intrinsic_scale, preprocess, prompts, report, splits
from stylecaps import situational_scale as situational
from stylecaps.backends.registry import BackendRegistry, build_registry
from stylecaps.config import ConfigError, PipelineConfig
from stylecaps.corpus import (
    apply_speaker_tags,
    group_by_speaker,
    read_jsonl,
    read_manifest,
    write_jsonl,
    write_manifest,
)
from stylecaps.taxonomy import load_emotion_specs

logger = logging.getLogger(__name__)

AUDIT_SUFFIX = ".audit.json"


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    if path.is_dir():
        for child in sorted(p for p in path.rglob("*") if p.is_file()):
            h.update(child.relative_to(path).as_posix().encode())
            h.update(sha256_file(child).encode())
        return h.hexdigest()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def audit_path(output: Path) -> Path:
    return output.with_name(output.name + AUDIT_SUFFIX)


def sidecar(output: Path, suffix: str) -> Path:
    return output.with_name(output.name + suffix)


@dataclass
class StageContext:
    config: PipelineConfig
    mock_backends: bool = False
    force: bool = False

    def registry(self, records, *roles: str) -> BackendRegistry:
        reg = build_registry(self.config.backends, records, force_mock=self.mock_backends)
        missing = [r for r in roles if getattr(reg, r) is None]
        if missing:
            raise ConfigError(
                f"backends not bound: {', '.join(missing)} (configure them or pass --mock-backends)"
            )
        return reg


@dataclass
class StageOutcome:
    stage: str
    skipped: bool
    counts: dict[str, Any] = field(default_factory=dict)


@dataclass
class _Result:
    counts: dict[str, Any]
    details: dict[str, Any] = field(default_factory=dict)
    sidecars: tuple[str, ...] = ()


StageFn = Callable[[StageContext, dict[str, Path], Path, dict[str, Any], int], _Result]


# --------------------------------------------------------------------------- stages


def _preprocess(ctx, inputs, out, params, seed):
    records = read_manifest(inputs["manifest"])
    roles = ["language_identifier"] if any(r.source_dataset == "voxceleb" for r in records) else []
    reg = ctx.registry(records, *roles)
    kept, counts = preprocess.preprocess(
        records,
        identifier=reg.language_identifier,
        asr=reg.asr_transcriber,
        min_s=params["min_clip_s"],
        max_s=params["max_clip_s"],
        min_speaker_total_s=params["min_speaker_total_s"],
        min_clips=params["min_voxceleb_clips"],
        lang=params["language"],
    )
    write_manifest(kept, out)
    return _Result(counts)


def _aggregate(ctx, inputs, out, params, seed):
    records = read_manifest(inputs["manifest"])
    bundles = annotate.read_annotations(inputs["annotations"])
    updated, stats = annotate.aggregate_annotations(records, bundles, params["split_kind"])
    write_manifest(updated, out)
    return _Result({"in": len(records), "out": len(updated), **stats})


def _scale_intrinsic(ctx, inputs, out, params, seed):
    records = read_manifest(inputs["manifest"])
    reg = ctx.registry(records, "speaker_embedder")
    pool_sources = set(params["pool_sources"])
    seed_records = [r for r in records if r.provenance.get("intrinsic_tags") == "human_consensus"]
    pool_records = [r for r in records if r.source_dataset in pool_sources]
    result = intrinsic_scale.scale_intrinsic(
        group_by_speaker(seed_records),
        group_by_speaker(pool_records),
        reg.speaker_embedder,
        threshold=params["threshold"],
        n_clips=params["clips_per_speaker"],
        rng_seed=seed,
    )
    matched = {e.target_id for e in result.edges}
    tagged = apply_speaker_tags(pool_records, [s for s in result.speakers if s.speaker_id in matched])
    by_id = {r.utterance_id: r for r in tagged}
    updated = []
    for r in records:
        new = by_id.get(r.utterance_id, r)
        if r.speaker_id in matched and r.utterance_id in by_id:
            new = replace(new, provenance={**new.provenance, "intrinsic_tags": "propagated"})
        updated.append(new)
    write_manifest(updated, out)
    write_jsonl((e.to_dict() for e in result.edges), sidecar(out, ".edges.jsonl"))
    counts = {
        "in": len(records),
        "out": len(updated),
        "seed_speakers": len({r.speaker_id for r in seed_records}),
        "pool_speakers": len({r.speaker_id for r in pool_records}),
        "edges": len(result.edges),
        "speakers_tagged": len(matched),
        "gender_conflicts": len(result.gender_conflicts),
    }
    return _Result(counts, {"gender_conflicts": result.gender_conflicts}, (".edges.jsonl",))


def _scale_situational(ctx, inputs, out, params, seed):
    records = read_manifest(inputs["manifest"])
    options = situational.CascadeOptions(
        low=params["low"],
        high=params["high"],
        top_k=params["top_k"],
        skip_expressivity=params["skip_expressivity"],
        skip_semantic=params["skip_semantic"],
        skip_acoustic=params["skip_acoustic"],
        seed=seed,
        max_in_flight=params["max_in_flight"],
    )
    roles = []
    if not options.skip_expressivity:
        roles.append("dva_classifier")
    if not options.skip_semantic:
        roles.append("text_embedder")
    if not options.skip_acoustic:
        roles.append("audio_rater")
    reg = ctx.registry(records, *roles)
    scope = [r for r in records if r.source_dataset in set(params["sources"])]
    dva = None if options.skip_expressivity else situational.collect_dva(scope, reg.dva_classifier)
    result = situational.run_situational_cascade(
        scope, params["emotions"], dva, reg.text_embedder, reg.audio_rater, options
    )
    by_id = {r.utterance_id: r for r in result.records}
    updated = [by_id.get(r.utterance_id, r) for r in records]
    write_manifest(updated, out)
    write_jsonl((a.to_dict() for a in result.audit), sidecar(out, ".cascade.jsonl"))
    counts = {
        "in": len(records),
        "out": len(updated),
        "in_scope": len(scope),
        "tagged_utterances": len(result.tagged_records),
        "per_emotion": result.counts,
    }
    return _Result(counts, sidecars=(".cascade.jsonl",))


def _tag_basic(ctx, inputs, out, params, seed):
    records = read_manifest(inputs["manifest"])
    reg = ctx.registry(records, "gender_classifier", "pitch_estimator", "phoneme_counter", "snr_estimator")
    th = basic_tags.BasicTagThresholds.from_mapping(params["thresholds"])
    updated, rep = basic_tags.tag_basic(records, reg, th)
    write_manifest(updated, out)
    counts = {
        "in": len(records),
        "out": len(updated),
        "classified_gender": len(rep.classified_gender),
        "gender_ties": len(rep.gender_ties),
        "missing_gender": len(rep.missing_gender),
    }
    return _Result(counts, {"missing_gender": rep.missing_gender, "gender_ties": rep.gender_ties})


def _build_splits(ctx, inputs, out, params, seed):
    records = read_manifest(inputs["manifest"])
    res = splits.build_splits(records, seed, params["holdout_speakers"], params["coverage_demand"])
    write_manifest(res.records, out)
    counts = {"in": len(records), "out": len(res.records), "dropped_duplicate_transcripts": len(res.dropped), **res.counts}
    return _Result(counts, {"dropped": res.dropped, "coverage": res.coverage, "deficits": res.deficits})


def _gen_prompts(ctx, inputs, out, params, seed):
    records = read_manifest(inputs["manifest"])
    reg = ctx.registry(records)
    usable, skipped = [], []
    for r in records:
        try:
            prompts.plan_prompt_tag_sets(r, params["scaled_sources"])
        except prompts.NoTagsError:
            skipped.append(r.utterance_id)
        else:
            usable.append(r)
    sets = prompts.generate_prompt_sets(usable, reg.prompt_generator, params["scaled_sources"], params["max_in_flight"])
    write_jsonl((s.to_dict() for s in sets), out)
    by_source: dict[str, int] = {}
    for s in sets:
        for src in s.sources:
            by_source[src] = by_source.get(src, 0) + 1
    counts = {
        "in": len(records),
        "out": len(sets),
        "prompts": sum(len(s.prompts) for s in sets),
        "dual_prompt_records": sum(len(s.prompts) == 2 for s in sets),
        "skipped_no_tags": len(skipped),
        "by_renderer": by_source,
    }
    return _Result(counts, {"skipped_no_tags": skipped})


def _build_eval(ctx, inputs, out, params, seed):
    records = read_manifest(inputs["manifest"])
    reg = ctx.registry(records)
    holdout = [r for r in records if r.split == "holdout"]
    items = splits.build_main_eval_set(holdout, seed, reg.prompt_generator, params["max_per_tag"])
    write_jsonl((i.to_dict() for i in items), out)
    per_tag: dict[str, int] = {}
    for i in items:
        per_tag[i.rich_tag] = per_tag.get(i.rich_tag, 0) + 1
    return _Result({"in": len(records), "holdout": len(holdout), "out": len(items), "tags_covered": len(per_tag)}, {"per_tag": per_tag})


def _build_compositional(ctx, inputs, out, params, seed):
    if "transcripts" in inputs:
        pool = [line.strip() for line in inputs["transcripts"].read_text(encoding="utf-8").splitlines()]
        n_in = len(pool)
        reg = ctx.registry([])
    else:
        records = read_manifest(inputs["manifest"])
        pool = sorted({r.transcript.strip() for r in records if r.transcript.strip()})
        n_in = len(records)
        reg = ctx.registry(records)
    items = splits.build_compositional_eval_set(
        params["intrinsic"], params["situational"], pool, seed, params["genders"], reg.prompt_generator
    )
    write_jsonl((i.to_dict() for i in items), out)
    return _Result({"in": n_in, "candidate_transcripts": len(pool), "out": len(items)})


def _build_mixture(ctx, inputs, out, params, seed):
    records = read_manifest(inputs["manifest"])
    train = [r for r in records if r.split == "train"]
    components = splits.group_components(train)
    if "regularization" in inputs:
        extra = read_manifest(inputs["regularization"])
        hours = params["regularization_hours"]
        components["regularization"] = (
            splits.sample_regularization_subset(extra, hours, seed) if hours is not None else extra
        )
    mix = splits.build_training_mixture(components, params["factors"])
    write_jsonl((row.to_dict() for row in mix.rows), out)
    counts = {
        "in": len(records),
        "train_records": len(train),
        "out": len(mix.rows),
        "component_records": mix.component_counts,
        "factors": mix.factors,
        "component_duration_s": mix.component_duration_s,
        "total_duration_s": mix.total_duration_s,
    }
    return _Result(counts)


def _score(ctx, inputs, out, params, seed):
    rows = read_jsonl(inputs["responses"])
    responses = [evalkit.RaterResponse.from_dict(r) for r in rows]
    rep = report.write_report(responses, out, params["item_majority"], params["figures"])
    return _Result({"in": len(responses), "files": rep.files})


@dataclass(frozen=True)
class StageSpec:
    name: str
    section: str
    fn: StageFn
    defaults: dict[str, Any]


STAGES: dict[str, StageSpec] = {
    s.name: s
    for s in (
        StageSpec(
            "preprocess",
            "preprocess",
            _preprocess,
            {
                "min_clip_s": preprocess.MIN_CLIP_S,
                "max_clip_s": preprocess.MAX_CLIP_S,
                "min_speaker_total_s": preprocess.MIN_SPEAKER_TOTAL_S,
                "min_voxceleb_clips": preprocess.MIN_VOXCELEB_CLIPS,
                "language": "en",
            },
        ),
        StageSpec("aggregate-annotations", "aggregate_annotations", _aggregate, {"split_kind": "train_dev"}),
        StageSpec(
            "scale-intrinsic",
            "scale_intrinsic",
            _scale_intrinsic,
            {
                "threshold": intrinsic_scale.SIMILARITY_THRESHOLD,
                "clips_per_speaker": intrinsic_scale.CLIPS_PER_SPEAKER,
                "pool_sources": ["emilia"],
            },
        ),
        StageSpec(
            "scale-situational",
            "scale_situational",
            _scale_situational,
            {
                "emotions": None,
                "sources": ["emilia"],
                "low": situational.DVA_LOW,
                "high": situational.DVA_HIGH,
                "top_k": situational.TOP_K,
                "skip_expressivity": False,
                "skip_semantic": False,
                "skip_acoustic": False,
                "max_in_flight": 1,
            },
        ),
        StageSpec("tag-basic", "basic_tags", _tag_basic, {"thresholds": {}}),
        StageSpec(
            "build-splits",
            "splits",
            _build_splits,
            {"holdout_speakers": splits.HOLDOUT_SPEAKERS, "coverage_demand": splits.COVERAGE_DEMAND},
        ),
        StageSpec(
            "gen-prompts",
            "prompts",
            _gen_prompts,
            {"scaled_sources": list(prompts.SCALED_SOURCES), "max_in_flight": 1},
        ),
        StageSpec("build-eval", "eval", _build_eval, {"max_per_tag": splits.MAX_CLIPS_PER_TAG}),
        StageSpec(
            "build-compositional",
            "compositional",
            _build_compositional,
            {
                "intrinsic": list(splits.COMPOSITIONAL_INTRINSIC),
                "situational": list(splits.COMPOSITIONAL_SITUATIONAL),
                "genders": list(splits.COMPOSITIONAL_GENDERS),
            },
        ),
        StageSpec(
            "build-mixture",
            "mixture",
            _build_mixture,
            {"factors": dict(splits.UPSAMPLE_FACTORS), "regularization_hours": None},
        ),
        StageSpec("score", "score", _score, {"item_majority": False, "figures": True}),
    )
}


def effective_params(spec: StageSpec, config: PipelineConfig, overrides: dict[str, Any]) -> dict[str, Any]:
    section = config.section(spec.section)
    unknown = set(section) - set(spec.defaults)
    if unknown:
        raise ConfigError(f"section {spec.section!r}: unknown keys {sorted(unknown)}")
    params = {**spec.defaults, **section}
    params.update({k: v for k, v in overrides.items() if v is not None})
    if spec.name == "scale-situational" and not params["emotions"]:
        params["emotions"] = sorted(load_emotion_specs())
    if spec.name == "aggregate-annotations" and params["split_kind"] not in annotate.AGREEMENT:
        raise ConfigError(f"split_kind must be one of {sorted(annotate.AGREEMENT)}")
    return params


def _audit_matches(out: Path, audit: dict, input_hashes: dict, params: dict, seed: int, config_digest: str) -> bool:
    if audit.get("inputs") != input_hashes or audit.get("params") != params:
        return False
    if audit.get("seed") != seed or audit.get("config_sha256") != config_digest:
        return False
    outputs = audit.get("outputs", {})
    if outputs.get("main") != sha256_file(out):
        return False
    for suffix, digest in outputs.items():
        if suffix == "main":
            continue
        side = sidecar(out, suffix)
        if not side.exists() or sha256_file(side) != digest:
            return False
    return True


def _jsonable(params: dict) -> dict:
    return json.loads(json.dumps(params, sort_keys=True))


def run_stage(
    name: str,
    ctx: StageContext,
    inputs: dict[str, str | Path],
    output: str | Path,
    overrides: dict[str, Any] | None = None,
) -> StageOutcome:
    try:
        spec = STAGES[name]
    except KeyError:
        raise ConfigError(f"unknown stage {name!r}") from None
    out = Path(output)
    paths = {k: Path(v) for k, v in inputs.items() if v is not None}
    for role, p in paths.items():
        if not p.exists():
            raise FileNotFoundError(f"{role} input not found: {p}")
    params = _jsonable(effective_params(spec, ctx.config, overrides or {}))
    seed = ctx.config.stage_seed(name)
    input_hashes = {k: sha256_file(p) for k, p in sorted(paths.items())}
    config_digest = ctx.config.digest(spec.section)
    ap = audit_path(out)

    if not ctx.force and out.exists() and ap.exists():
        try:
            previous = json.loads(ap.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            previous = {}
        if _audit_matches(out, previous, input_hashes, params, seed, config_digest):
            logger.info("%s: output up to date, skipping", name)
            return StageOutcome(name, True, previous.get("counts", {}))

    result = spec.fn(ctx, paths, out, params, seed)
    outputs = {"main": sha256_file(out)}
    for suffix in result.sidecars:
        outputs[suffix] = sha256_file(sidecar(out, suffix))
    audit = {
        "stage": name,
        "seed": seed,
        "params": params,
        "inputs": input_hashes,
        "config_sha256": config_digest,
        "mock_backends": ctx.mock_backends,
        "counts": result.counts,
        "details": result.details,
        "outputs": outputs,
    }
    ap.parent.mkdir(parents=True, exist_ok=True)
    ap.write_text(json.dumps(audit, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return StageOutcome(name, False, result.counts)


PIPELINE_OUTPUTS = (
    ("preprocess", "01_preprocessed.jsonl"),
    ("aggregate-annotations", "02_annotated.jsonl"),
    ("scale-intrinsic", "03_intrinsic.jsonl"),
    ("scale-situational", "04_situational.jsonl"),
    ("tag-basic", "05_basic.jsonl"),
    ("build-splits", "06_splits.jsonl"),
    ("gen-prompts", "07_prompts.jsonl"),
    ("build-eval", "08_eval.jsonl"),
    ("build-compositional", "09_compositional.jsonl"),
    ("build-mixture", "10_mixture.jsonl"),
)


def run_pipeline(
    ctx: StageContext,
    manifest: str | Path,
    annotations: str | Path,
    workdir: str | Path,
    regularization: str | Path | None = None,
) -> list[StageOutcome]:
    """Chain every stage; prompts, eval sets and the mixture are built from the split manifest."""
    work = Path(workdir)
    work.mkdir(parents=True, exist_ok=True)
    out = {stage: work / fname for stage, fname in PIPELINE_OUTPUTS}
    plan = [
        ("preprocess", {"manifest": manifest}),
        ("aggregate-annotations", {"manifest": out["preprocess"], "annotations": annotations}),
        ("scale-intrinsic", {"manifest": out["aggregate-annotations"]}),
        ("scale-situational", {"manifest": out["scale-intrinsic"]}),
        ("tag-basic", {"manifest": out["scale-situational"]}),
        ("build-splits", {"manifest": out["tag-basic"]}),
        ("gen-prompts", {"manifest": out["build-splits"]}),
        ("build-eval", {"manifest": out["build-splits"]}),
        ("build-compositional", {"manifest": out["build-splits"]}),
        ("build-mixture", {"manifest": out["build-splits"], "regularization": regularization}),
    ]
    return [run_stage(stage, ctx, inputs, out[stage]) for stage, inputs in plan]

