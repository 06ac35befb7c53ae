"""Expressivity filtering -> semantic matching -> acoustic matching for situational tags."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from stylecaps.backends.base import (
    DvaScore,
    UnparseableRatingError,
    ZeroVectorError,
    cosine,
    semantic_query,
)
from stylecaps.corpus import UtteranceRecord
from stylecaps.seeding import derive_seed
from stylecaps.taxonomy import EmotionFilterSpec, emotion_filter_spec

logger = logging.getLogger(__name__)

DVA_LOW = 0.35
DVA_HIGH = 0.75
TOP_K = 100_000
KEEP_RATING = 5


class MissingDvaError(KeyError):
    pass


def _dva_for(dva: Mapping[str, DvaScore], r: UtteranceRecord) -> DvaScore:
    try:
        return dva[r.utterance_id]
    except KeyError:
        raise MissingDvaError(r.utterance_id) from None


def is_expressive(score: DvaScore, low: float = DVA_LOW, high: float = DVA_HIGH) -> bool:
    values = score.as_tuple()
    return min(values) < low or max(values) > high


def _direction_ok(direction: str, values: Sequence[float], low: float, high: float) -> bool:
    if direction == "none":
        return True
    if direction == "high":
        return any(v > high for v in values)
    if direction == "low":
        return any(v < low for v in values)
    raise ValueError(f"unknown direction {direction!r}")


def matches_direction(
    score: DvaScore, spec: EmotionFilterSpec, low: float = DVA_LOW, high: float = DVA_HIGH
) -> bool:
    """Arousal/dominance direction holds on either of the two; valence on valence alone."""
    return _direction_ok(
        spec.arousal_dominance_direction, (score.dominance, score.arousal), low, high
    ) and _direction_ok(spec.valence_direction, (score.valence,), low, high)


def expressivity_filter(
    records: Sequence[UtteranceRecord],
    dva: Mapping[str, DvaScore],
    low: float = DVA_LOW,
    high: float = DVA_HIGH,
) -> list[UtteranceRecord]:
    return [r for r in records if is_expressive(_dva_for(dva, r), low, high)]


def direction_filter(
    records: Sequence[UtteranceRecord],
    dva: Mapping[str, DvaScore],
    emotion: str,
    low: float = DVA_LOW,
    high: float = DVA_HIGH,
) -> list[UtteranceRecord]:
    spec = emotion_filter_spec(emotion)
    return [r for r in records if matches_direction(_dva_for(dva, r), spec, low, high)]


@dataclass
class SemanticQueryResult:
    emotion: str
    ranked: list[tuple[str, float]]
    keyword_excluded_count: int = 0
    empty_transcript_count: int = 0


def semantic_match(
    records: Sequence[UtteranceRecord], emotion: str, text_embedder
) -> SemanticQueryResult:
    """Rank transcripts by similarity to the emotion query, dropping keyword leaks first."""
    spec = emotion_filter_spec(emotion)
    query = np.asarray(text_embedder.embed_text(semantic_query(emotion)), dtype=np.float64)
    ranked = []
    excluded = 0
    empty = 0
    for r in records:
        if not r.transcript.strip():
            empty += 1
            continue
        if spec.matches_keyword(r.transcript):
            excluded += 1
            continue
        try:
            c = cosine(query, text_embedder.embed_text(r.transcript))
        except ZeroVectorError:
            empty += 1
            continue
        ranked.append((r.utterance_id, c))
    ranked.sort(key=lambda x: (-x[1], x[0]))
    return SemanticQueryResult(emotion, ranked, excluded, empty)


@dataclass(frozen=True)
class AuditEntry:
    utterance_id: str
    emotion: str
    dva: tuple[float, float, float] | None
    cosine: float | None
    rating: int | None
    kept: bool
    reason: str

    def to_dict(self) -> dict:
        return {
            "utterance_id": self.utterance_id,
            "emotion": self.emotion,
            "dva": list(self.dva) if self.dva is not None else None,
            "cosine": self.cosine,
            "rating": self.rating,
            "kept": self.kept,
            "reason": self.reason,
        }


@dataclass
class AcousticMatchResult:
    emotion: str
    kept: list[str]
    ratings: dict[str, int]
    unparseable: list[str]


def acoustic_match(
    ranked: SemanticQueryResult,
    emotion: str,
    audio_refs: Mapping[str, str],
    rater,
    top_k: int = TOP_K,
    max_in_flight: int = 1,
) -> AcousticMatchResult:
    """Rate the top ``min(top_k, len(ranked))`` items and keep those rated 5.

    One attempt per item; responses without a valid rating are dropped and counted.
    """
    candidates = [uid for uid, _ in ranked.ranked[:top_k]]

    def rate(uid: str):
        try:
            return rater.rate_emotion_acoustics(audio_refs[uid], emotion).value
        except UnparseableRatingError:
            return None

    if max_in_flight > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            values = list(pool.map(rate, candidates))
    else:
        values = [rate(uid) for uid in candidates]

    ratings = {}
    unparseable = []
    for uid, v in zip(candidates, values):
        if v is None:
            unparseable.append(uid)
        else:
            ratings[uid] = v
    kept = sorted(uid for uid, v in ratings.items() if v == KEEP_RATING)
    if unparseable:
        logger.info("%s: %d ratings unparseable, dropped", emotion, len(unparseable))
    return AcousticMatchResult(emotion, kept, ratings, unparseable)


@dataclass(frozen=True)
class CascadeOptions:
    low: float = DVA_LOW
    high: float = DVA_HIGH
    top_k: int = TOP_K
    skip_expressivity: bool = False
    skip_semantic: bool = False
    skip_acoustic: bool = False
    seed: int = 0
    max_in_flight: int = 1


@dataclass
class CascadeResult:
    records: list[UtteranceRecord]
    tagged: dict[str, list[str]] = field(default_factory=dict)
    audit: list[AuditEntry] = field(default_factory=list)
    counts: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def tagged_records(self) -> list[UtteranceRecord]:
        ids = {uid for uids in self.tagged.values() for uid in uids}
        return [r for r in self.records if r.utterance_id in ids]


def run_situational_cascade(
    records: Sequence[UtteranceRecord],
    emotions: Sequence[str],
    dva: Mapping[str, DvaScore] | None,
    text_embedder=None,
    rater=None,
    options: CascadeOptions = CascadeOptions(),
) -> CascadeResult:
    """Run the cascade once per emotion and tag the surviving utterances.

    ``records`` is returned in input order with emotion tags added; an utterance
    can pick up several emotions. The skip flags drop one stage each: without
    the expressivity stage neither the extremity nor the direction filter runs;
    without semantic matching a seeded random sample of ``top_k`` candidates is
    rated; without acoustic matching the top ``top_k`` candidates are kept as is.
    """
    refs = {r.utterance_id: r.audio_ref for r in records}
    if not emotions:
        return CascadeResult(list(records))

    if options.skip_expressivity:
        expressive = list(records)
    else:
        expressive = expressivity_filter(records, dva, options.low, options.high)

    result = CascadeResult([])
    new_tags: dict[str, list[str]] = {}
    for emotion in emotions:
        emotion_filter_spec(emotion)  # fail fast on emotions without metadata
        counts = {"in": len(records), "expressive": len(expressive)}
        if options.skip_expressivity:
            pool = expressive
        else:
            pool = direction_filter(expressive, dva, emotion, options.low, options.high)
        counts["direction"] = len(pool)

        cosines: dict[str, float] = {}
        if options.skip_semantic:
            rng = np.random.default_rng(derive_seed(options.seed, "skip-semantic", emotion))
            ids = sorted(r.utterance_id for r in pool)
            take = min(options.top_k, len(ids))
            picked = sorted(rng.choice(len(ids), size=take, replace=False).tolist()) if take else []
            ranked = SemanticQueryResult(emotion, [(ids[i], float("nan")) for i in picked])
        else:
            ranked = semantic_match(pool, emotion, text_embedder)
            cosines = dict(ranked.ranked)
        counts["keyword_excluded"] = ranked.keyword_excluded_count
        counts["ranked"] = len(ranked.ranked)

        if options.skip_acoustic:
            kept = sorted(uid for uid, _ in ranked.ranked[: options.top_k])
            ratings: dict[str, int] = {}
            counts["rated"] = 0
        else:
            am = acoustic_match(ranked, emotion, refs, rater, options.top_k, options.max_in_flight)
            kept, ratings = am.kept, am.ratings
            counts["rated"] = min(options.top_k, len(ranked.ranked))
            counts["unparseable"] = len(am.unparseable)
        counts["kept"] = len(kept)

        kept_set = set(kept)
        for uid in sorted(set(uid for uid, _ in ranked.ranked[: options.top_k]) | kept_set):
            score = dva.get(uid) if dva else None
            c = cosines.get(uid)
            result.audit.append(
                AuditEntry(
                    utterance_id=uid,
                    emotion=emotion,
                    dva=score.as_tuple() if score else None,
                    cosine=c,
                    rating=ratings.get(uid),
                    kept=uid in kept_set,
                    reason="kept" if uid in kept_set else "rating",
                )
            )
        result.tagged[emotion] = kept
        result.counts[emotion] = counts
        for uid in kept:
            new_tags.setdefault(uid, []).append(emotion)

    result.records = [
        r.add_tags(new_tags[r.utterance_id]) if r.utterance_id in new_tags else r for r in records
    ]
    return result


def collect_dva(records: Sequence[UtteranceRecord], classifier) -> dict[str, DvaScore]:
    return {r.utterance_id: classifier.classify_dva(r.audio_ref) for r in records}
