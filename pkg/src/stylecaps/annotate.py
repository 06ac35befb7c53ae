"""Crowdsourced intrinsic-tag aggregation, annotator qualification and tag-gap analysis."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

from stylecaps.corpus import SpeakerRecord, UtteranceRecord, read_jsonl
from stylecaps.taxonomy import load_taxonomy, normalize_tag_name

logger = logging.getLogger(__name__)

SplitKind = Literal["train_dev", "holdout"]

MIN_TAGS_PER_ANNOTATION = 3
EXPECTED_ANNOTATIONS = 5
AGREEMENT = {"train_dev": 2, "holdout": 3}
QUALIFICATION_ITEMS = 6
QUALIFICATION_PASS = 5

BUNDLE_MIN_CLIPS = 3
BUNDLE_MAX_CLIPS = 8
BUNDLE_MIN_TOTAL_S = 20.0
BUNDLE_MAX_TOTAL_S = 40.0


class AnnotationError(ValueError):
    pass


class InfeasibleBundleError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotationBundle:
    speaker_id: str
    annotations: tuple[tuple[str, frozenset[str]], ...]
    required_min_tags_per_annotation: int = MIN_TAGS_PER_ANNOTATION

    def __post_init__(self):
        taxonomy = load_taxonomy()
        clean = []
        for annotator_id, tags in self.annotations:
            tags = frozenset(normalize_tag_name(t) for t in tags)
            if len(tags) < self.required_min_tags_per_annotation:
                raise AnnotationError(
                    f"{self.speaker_id}/{annotator_id}: {len(tags)} distinct tags, "
                    f"need at least {self.required_min_tags_per_annotation}"
                )
            for t in tags:
                tag = taxonomy.get(t)
                if tag is None or not (tag.is_rich and tag.is_intrinsic):
                    raise AnnotationError(f"{self.speaker_id}/{annotator_id}: {t!r} is not a rich intrinsic tag")
            clean.append((annotator_id, tags))
        object.__setattr__(self, "annotations", tuple(clean))

    @property
    def flagged(self) -> bool:
        return len(self.annotations) < EXPECTED_ANNOTATIONS

    def agreement_counts(self) -> Counter:
        return Counter(t for _, tags in self.annotations for t in tags)


@dataclass(frozen=True)
class QualificationResult:
    annotator_id: str
    correct_count: int
    passed: bool


def consensus_tags(bundle: AnnotationBundle, split_kind: SplitKind = "train_dev") -> set[str]:
    """Tags chosen by at least 2 (train/dev) or 3 (holdout) annotators."""
    need = AGREEMENT[split_kind]
    if bundle.flagged:
        logger.warning("%s: only %d annotations", bundle.speaker_id, len(bundle.annotations))
    out = {t for t, n in bundle.agreement_counts().items() if n >= need}
    if not out:
        logger.warning("%s: empty %s consensus", bundle.speaker_id, split_kind)
    return out


def score_qualification(responses: Sequence[bool], annotator_id: str = "") -> QualificationResult:
    if len(responses) != QUALIFICATION_ITEMS:
        raise ValueError(f"expected {QUALIFICATION_ITEMS} responses, got {len(responses)}")
    correct = sum(bool(r) for r in responses)
    return QualificationResult(annotator_id, correct, correct >= QUALIFICATION_PASS)


def tag_frequency_gaps(
    speakers: Iterable[SpeakerRecord], k: int, exclude_factors: Sequence[str] = ()
) -> list[tuple[str, int]]:
    """The ``k`` least frequent rich intrinsic tags over ``speakers``; ties break by name."""
    taxonomy = load_taxonomy()
    vocab = [
        t.name
        for t in taxonomy.select(scope="intrinsic", richness="rich")
        if t.factor not in exclude_factors
    ]
    counts = Counter({name: 0 for name in vocab})
    for s in speakers:
        for t in s.intrinsic_tags:
            if t in counts:
                counts[t] += 1
    ranked = sorted(counts.items(), key=lambda kv: (kv[1], kv[0]))
    return ranked[:k]


def build_audio_bundle_plan(
    speaker: SpeakerRecord,
    min_clips: int = BUNDLE_MIN_CLIPS,
    max_clips: int = BUNDLE_MAX_CLIPS,
    min_total: float = BUNDLE_MIN_TOTAL_S,
    max_total: float = BUNDLE_MAX_TOTAL_S,
) -> list[str]:
    """Pick clips for the annotation audio: 3-8 clips totalling 20-40 s.

    Clips are taken longest first, each added while the running total stays
    within ``max_total``, stopping as soon as both minimums hold. If that greedy
    pass fails, the same ordering is searched with backtracking so an error is
    raised only when no subset qualifies.
    """
    order = sorted(range(len(speaker.utterance_ids)), key=lambda i: (-speaker.clip_durations[i], i))
    durs = [speaker.clip_durations[i] for i in order]
    n = len(durs)
    # best_from[i][c]: largest total reachable with c more clips from positions >= i
    best_from = [[0.0] * (max_clips + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        for c in range(1, max_clips + 1):
            best_from[i][c] = max(best_from[i + 1][c], durs[i] + best_from[i + 1][c - 1])

    chosen: list[int] = []

    def search(i: int, total: float) -> bool:
        if len(chosen) >= min_clips and total >= min_total:
            return True
        if i == n or len(chosen) == max_clips:
            return False
        if len(chosen) + (n - i) < min_clips:
            return False
        if total + best_from[i][max_clips - len(chosen)] < min_total:
            return False
        if total + durs[i] <= max_total:
            chosen.append(i)
            if search(i + 1, total + durs[i]):
                return True
            chosen.pop()
        return search(i + 1, total)

    if not search(0, 0.0):
        raise InfeasibleBundleError(
            f"{speaker.speaker_id}: no {min_clips}-{max_clips} clips total {min_total}-{max_total} s"
        )
    picked = sorted(order[i] for i in chosen)
    return [speaker.utterance_ids[i] for i in picked]


def read_annotations(path: str | Path) -> dict[str, AnnotationBundle]:
    """Load ``{speaker_id, annotator_id, tags}`` rows into one bundle per speaker."""
    grouped: dict[str, list[tuple[str, frozenset[str]]]] = {}
    for lineno, row in enumerate(read_jsonl(path), start=1):
        try:
            grouped.setdefault(row["speaker_id"], []).append(
                (str(row["annotator_id"]), frozenset(row["tags"]))
            )
        except (KeyError, TypeError) as exc:
            raise AnnotationError(f"annotation row {lineno}: missing {exc}") from None
    return {sid: AnnotationBundle(sid, tuple(anns)) for sid, anns in grouped.items()}


def resolve_accent(
    speaker_id: str, metadata_accent: str | None, llm_accent: str | None
) -> tuple[str | None, str | None]:
    """Pick the accent tag and its provenance; metadata wins over the LLM answer."""
    taxonomy = load_taxonomy()

    def valid(a: str | None) -> str | None:
        if not a:
            return None
        tag = taxonomy.get(normalize_tag_name(a))
        if tag is None or tag.factor != "accent":
            logger.info("%s: accent %r outside vocabulary, ignored", speaker_id, a)
            return None
        return tag.name

    meta, llm = valid(metadata_accent), valid(llm_accent)
    if meta and llm and meta != llm:
        logger.warning("%s: accent conflict metadata=%s llm=%s; using metadata", speaker_id, meta, llm)
    if meta:
        return meta, "metadata"
    if llm:
        return llm, "llm"
    return None, None


def aggregate_annotations(
    records: Sequence[UtteranceRecord],
    bundles: Mapping[str, AnnotationBundle],
    split_kind: SplitKind = "train_dev",
) -> tuple[list[UtteranceRecord], dict[str, int]]:
    """Attach consensus intrinsic tags (plus accent) to every utterance of annotated speakers.

    The stricter holdout consensus is kept in ``meta["consensus_holdout"]`` so a
    later split assignment can tighten holdout speakers.
    """
    taxonomy = load_taxonomy()
    annotated = {
        t.name for t in taxonomy.select(scope="intrinsic", richness="rich") if t.factor != "accent"
    }
    consensus: dict[str, tuple[set[str], set[str]]] = {}
    stats = {"speakers_annotated": 0, "speakers_flagged": 0, "empty_consensus": 0}
    for sid, bundle in bundles.items():
        chosen = consensus_tags(bundle, split_kind)
        strict = consensus_tags(bundle, "holdout") if split_kind == "train_dev" else chosen
        consensus[sid] = (chosen, strict)
        stats["speakers_annotated"] += 1
        stats["speakers_flagged"] += bundle.flagged
        stats["empty_consensus"] += not chosen

    out = []
    for r in records:
        if r.speaker_id not in consensus:
            out.append(r)
            continue
        chosen, strict = consensus[r.speaker_id]
        accent, source = resolve_accent(r.speaker_id, r.meta.get("accent"), r.meta.get("llm_accent"))
        base = [t for t in r.tags if t not in annotated and taxonomy.factor_of(t) != "accent"]
        extra = [accent] if accent else []
        meta = {**r.meta, "consensus_holdout": sorted(strict)}
        provenance = {**r.provenance, "intrinsic_tags": "human_consensus"}
        if source:
            provenance["accent_source"] = source
        out.append(replace(r, meta=meta, provenance=provenance).with_tags(base + sorted(chosen) + extra))
    return out, stats

