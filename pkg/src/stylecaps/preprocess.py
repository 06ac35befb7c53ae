"""Source-corpus filters run before any tagging.

All bounds are inclusive on the keep side.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import replace
from typing import Sequence

from stylecaps.corpus import UtteranceRecord

logger = logging.getLogger(__name__)

MIN_CLIP_S = 2.0
MAX_CLIP_S = 30.0
MIN_SPEAKER_TOTAL_S = 300.0
MIN_VOXCELEB_CLIPS = 10
PEAK_DBFS = -0.1


class MissingDurationError(ValueError):
    pass


def filter_duration(
    records: Sequence[UtteranceRecord], min_s: float = MIN_CLIP_S, max_s: float = MAX_CLIP_S
) -> list[UtteranceRecord]:
    out = []
    for r in records:
        if r.duration_s is None:
            raise MissingDurationError(f"{r.utterance_id} has no duration")
        if min_s <= r.duration_s <= max_s:
            out.append(r)
    return out


def speaker_totals(records: Sequence[UtteranceRecord]) -> dict[str, float]:
    parts: dict[str, list[float]] = defaultdict(list)
    for r in records:
        if r.duration_s is None:
            raise MissingDurationError(f"{r.utterance_id} has no duration")
        parts[r.speaker_id].append(r.duration_s)
    return {k: math.fsum(v) for k, v in parts.items()}


def filter_min_speaker_duration(
    records: Sequence[UtteranceRecord], min_total: float = MIN_SPEAKER_TOTAL_S
) -> list[UtteranceRecord]:
    """Drop every utterance of speakers whose summed duration is below ``min_total`` seconds."""
    totals = speaker_totals(records)
    return [r for r in records if totals[r.speaker_id] >= min_total]


def filter_min_clip_count(
    records: Sequence[UtteranceRecord], min_clips: int = MIN_VOXCELEB_CLIPS, dataset: str = "voxceleb"
) -> list[UtteranceRecord]:
    """Drop speakers of ``dataset`` with fewer than ``min_clips`` clips; other datasets pass through."""
    counts: dict[str, int] = defaultdict(int)
    for r in records:
        if r.source_dataset == dataset:
            counts[r.speaker_id] += 1
    return [r for r in records if r.source_dataset != dataset or counts[r.speaker_id] >= min_clips]


def filter_language(records: Sequence[UtteranceRecord], identifier, lang: str = "en") -> list[UtteranceRecord]:
    out = []
    for r in records:
        if not r.transcript.strip():
            logger.warning("%s: empty transcript, dropped by language filter", r.utterance_id)
            continue
        if identifier.identify_language(r.transcript) == lang:
            out.append(r)
    return out


def fill_transcripts(records: Sequence[UtteranceRecord], asr) -> list[UtteranceRecord]:
    """Transcribe utterances that lack a ground-truth transcript."""
    out = []
    for r in records:
        if r.transcript.strip():
            out.append(r)
        else:
            text = asr.transcribe(r.audio_ref)
            out.append(replace(r, transcript=text, provenance={**r.provenance, "transcript": "asr"}))
    return out


def mark_provenance(records: Sequence[UtteranceRecord], **flags) -> list[UtteranceRecord]:
    """Merge ``flags`` into each record's provenance, e.g. ``denoise="applied"``."""
    return [replace(r, provenance={**r.provenance, **flags}) for r in records]


def preprocess(
    records: Sequence[UtteranceRecord],
    identifier=None,
    asr=None,
    *,
    min_s: float = MIN_CLIP_S,
    max_s: float = MAX_CLIP_S,
    min_speaker_total_s: float = MIN_SPEAKER_TOTAL_S,
    speaker_total_datasets: Sequence[str] = ("emilia",),
    min_clips: int = MIN_VOXCELEB_CLIPS,
    language_datasets: Sequence[str] = ("voxceleb",),
    lang: str = "en",
    loudness_datasets: Sequence[str] = ("voxceleb", "expresso", "ears"),
    denoise_datasets: Sequence[str] = ("voxceleb",),
) -> tuple[list[UtteranceRecord], dict[str, int]]:
    """The standard filter chain; returns kept records and per-step counts."""
    counts = {"in": len(records)}
    kept = filter_duration(records, min_s, max_s)
    counts["after_duration"] = len(kept)
    if asr is not None:
        kept = fill_transcripts(kept, asr)

    if identifier is not None and language_datasets:
        lang_scope = [r for r in kept if r.source_dataset in language_datasets]
        passed = {r.utterance_id for r in filter_language(lang_scope, identifier, lang)}
        kept = [r for r in kept if r.source_dataset not in language_datasets or r.utterance_id in passed]
    counts["after_language"] = len(kept)

    kept = filter_min_clip_count(kept, min_clips, "voxceleb")
    counts["after_clip_count"] = len(kept)

    scoped = [r for r in kept if r.source_dataset in speaker_total_datasets]
    long_enough = {r.utterance_id for r in filter_min_speaker_duration(scoped, min_speaker_total_s)}
    kept = [r for r in kept if r.source_dataset not in speaker_total_datasets or r.utterance_id in long_enough]
    counts["after_speaker_total"] = len(kept)

    # DSP steps run outside the core; only mark them pending unless already applied.
    out = []
    for r in kept:
        flags = {}
        if r.source_dataset in loudness_datasets and "loudness_normalization" not in r.provenance:
            flags["loudness_normalization"] = "pending"
            flags["peak_dbfs"] = PEAK_DBFS
        if r.source_dataset in denoise_datasets and "denoise" not in r.provenance:
            flags["denoise"] = "pending"
        out.append(replace(r, provenance={**r.provenance, **flags}) if flags else r)
    counts["out"] = len(out)
    return out, counts
