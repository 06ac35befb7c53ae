"""Propagate annotated intrinsic tags to perceptually similar speakers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from stylecaps.backends.base import ZeroVectorError
from stylecaps.corpus import SpeakerRecord
from stylecaps.seeding import derive_seed
from stylecaps.taxonomy import CLARITY_TAGS

logger = logging.getLogger(__name__)

CLIPS_PER_SPEAKER = 10
SIMILARITY_THRESHOLD = 0.8


class NoClipsError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SpeakerEmbedding:
    speaker_id: str
    vector: np.ndarray
    n_clips_used: int


@dataclass(frozen=True)
class Edge:
    seed_id: str
    target_id: str
    cosine: float

    def to_dict(self) -> dict:
        return {"seed_id": self.seed_id, "target_id": self.target_id, "cosine": self.cosine}


def lower_median(stack: np.ndarray) -> np.ndarray:
    """Coordinate-wise median; for an even count take the lower of the two middle values."""
    ordered = np.sort(stack, axis=0)
    return ordered[(ordered.shape[0] - 1) // 2]


def compute_speaker_embedding(
    speaker: SpeakerRecord, embedder, n: int = CLIPS_PER_SPEAKER, rng_seed: int = 0
) -> SpeakerEmbedding:
    """Median clip embedding over ``min(n, clip_count)`` clips sampled without replacement."""
    refs = speaker.audio_refs
    if not refs:
        raise NoClipsError(speaker.speaker_id)
    m = min(n, len(refs))
    rng = np.random.default_rng(derive_seed(rng_seed, "speaker-clips", speaker.speaker_id))
    idx = np.sort(rng.choice(len(refs), size=m, replace=False))
    stack = np.stack([np.asarray(embedder.embed_speaker_clip(refs[i]), dtype=np.float64) for i in idx])
    return SpeakerEmbedding(speaker.speaker_id, lower_median(stack), m)


def _unit(v: np.ndarray, speaker_id: str) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ZeroVectorError(f"{speaker_id}: zero embedding")
    return v / norm


def find_similar_speakers(
    seed: SpeakerEmbedding, pool: Sequence[SpeakerEmbedding], threshold: float = SIMILARITY_THRESHOLD
) -> list[tuple[str, float]]:
    """Pool speakers with cosine >= ``threshold`` to the seed, most similar first."""
    if not pool:
        return []
    dim = seed.vector.shape
    for p in pool:
        if p.vector.shape != dim:
            raise DimensionMismatchError(f"{p.speaker_id}: {p.vector.shape} vs {dim}")
    s = _unit(seed.vector, seed.speaker_id)
    mat = np.stack([_unit(p.vector, p.speaker_id) for p in pool])
    sims = mat @ s
    hits = [(p.speaker_id, float(c)) for p, c in zip(pool, sims) if c >= threshold]
    return sorted(hits, key=lambda h: (-h[1], h[0]))


def propagate_intrinsic_tags(seed_speaker: SpeakerRecord, targets: Iterable[SpeakerRecord]) -> list[SpeakerRecord]:
    """Union the seed's non-clarity intrinsic tags into each target and copy its gender."""
    copied = seed_speaker.intrinsic_tags - CLARITY_TAGS
    out = []
    for t in targets:
        gender = seed_speaker.gender_tag if seed_speaker.gender_tag != "unknown" else t.gender_tag
        out.append(replace(t, intrinsic_tags=t.intrinsic_tags | copied, gender_tag=gender))
    return out


@dataclass
class IntrinsicScaleResult:
    speakers: list[SpeakerRecord]
    edges: list[Edge]
    gender_conflicts: list[str]


def scale_intrinsic(
    seeds: Sequence[SpeakerRecord],
    pool: Sequence[SpeakerRecord],
    embedder,
    threshold: float = SIMILARITY_THRESHOLD,
    n_clips: int = CLIPS_PER_SPEAKER,
    rng_seed: int = 0,
) -> IntrinsicScaleResult:
    """Tag every pool speaker that matches one or more seeds.

    Tags from all matching seeds are unioned; the gender comes from the most
    similar seed and disagreements are logged.
    """
    seed_embs = [compute_speaker_embedding(s, embedder, n_clips, rng_seed) for s in seeds]
    pool_embs = [compute_speaker_embedding(s, embedder, n_clips, rng_seed) for s in pool]
    seeds_by_id = {s.speaker_id: s for s in seeds}

    edges: list[Edge] = []
    for emb in seed_embs:
        for target_id, c in find_similar_speakers(emb, pool_embs, threshold):
            edges.append(Edge(emb.speaker_id, target_id, c))
    edges.sort(key=lambda e: (e.target_id, -e.cosine, e.seed_id))

    matches: dict[str, list[Edge]] = {}
    for e in edges:
        matches.setdefault(e.target_id, []).append(e)

    conflicts = []
    updated = []
    for target in pool:
        hits = matches.get(target.speaker_id)
        if not hits:
            updated.append(target)
            continue
        t = replace(target, gender_tag="unknown")
        for e in reversed(hits):  # best match applied last so its gender wins
            (t,) = propagate_intrinsic_tags(seeds_by_id[e.seed_id], [t])
        genders = {seeds_by_id[e.seed_id].gender_tag for e in hits} - {"unknown"}
        if len(genders) > 1:
            conflicts.append(target.speaker_id)
            logger.warning(
                "%s: seeds disagree on gender %s; using %s from %s",
                target.speaker_id,
                sorted(genders),
                t.gender_tag,
                hits[0].seed_id,
            )
        if t.gender_tag == "unknown":
            t = replace(t, gender_tag=target.gender_tag)
        updated.append(t)
    edges.sort(key=lambda e: (e.seed_id, -e.cosine, e.target_id))
    return IntrinsicScaleResult(updated, edges, conflicts)
