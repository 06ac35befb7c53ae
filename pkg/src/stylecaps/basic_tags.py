"""Gender, pitch-level, speed-level and noise-level tagging.

Every numeric threshold lives in :class:`BasicTagThresholds`.
"""

from __future__ import annotations

import bisect
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Sequence

from stylecaps.corpus import SpeakerRecord, UtteranceRecord, group_by_speaker
from stylecaps.taxonomy import NOISE_LEVELS

logger = logging.getLogger(__name__)


class UnknownGenderError(ValueError):
    pass


class ZeroDurationError(ValueError):
    pass


@dataclass(frozen=True)
class BasicTagThresholds:
    pitch_male_low: float = 115.7
    pitch_male_high: float = 149.7
    pitch_female_low: float = 141.6
    pitch_female_high: float = 184.5
    speed_slow: float = 11.5
    speed_fast: float = 19.1
    noise_boundaries: tuple[float, ...] = (17.1, 25.4, 33.7, 42.0, 50.2, 58.5, 66.8, 75.0)
    max_gender_utterances: int = 50

    def __post_init__(self):
        object.__setattr__(self, "noise_boundaries", tuple(self.noise_boundaries))
        b = self.noise_boundaries
        if any(x >= y for x, y in zip(b, b[1:])):
            raise ValueError("noise boundaries must be strictly increasing")
        if len(b) != len(NOISE_LEVELS) + 1:
            raise ValueError(f"expected {len(NOISE_LEVELS) + 1} noise boundaries, got {len(b)}")
        if not (self.pitch_male_low < self.pitch_male_high and self.pitch_female_low < self.pitch_female_high):
            raise ValueError("pitch low threshold must be below high")
        if not self.speed_slow < self.speed_fast:
            raise ValueError("slow threshold must be below fast")

    @classmethod
    def from_mapping(cls, values: dict | None) -> "BasicTagThresholds":
        return cls(**(values or {}))


DEFAULT_THRESHOLDS = BasicTagThresholds()


def tag_pitch_level(mean_pitch: float, gender: str, th: BasicTagThresholds = DEFAULT_THRESHOLDS) -> str:
    if gender == "male":
        low, high = th.pitch_male_low, th.pitch_male_high
    elif gender == "female":
        low, high = th.pitch_female_low, th.pitch_female_high
    else:
        raise UnknownGenderError(gender)
    if not (math.isfinite(mean_pitch) and mean_pitch > 0):
        raise ValueError(f"pitch must be finite and positive, got {mean_pitch}")
    if mean_pitch < low:
        return "low-pitched"
    if mean_pitch > high:
        return "high-pitched"
    return "medium-pitched"


def phonemes_per_second(phonemes: int, duration_s: float) -> float:
    if not duration_s or duration_s <= 0:
        raise ZeroDurationError(f"duration {duration_s}")
    return phonemes / duration_s


def tag_speed_level(phonemes: int, duration_s: float, th: BasicTagThresholds = DEFAULT_THRESHOLDS) -> str:
    pps = phonemes_per_second(phonemes, duration_s)
    if pps < th.speed_slow:
        return "slow"
    if pps > th.speed_fast:
        return "fast"
    return "measured"


def noise_interval(snr: float, th: BasicTagThresholds = DEFAULT_THRESHOLDS) -> int:
    """Index 0..len(boundaries) of the interval containing ``snr``; a boundary value opens the upper interval."""
    if not math.isfinite(snr):
        raise ValueError(f"non-finite snr {snr}")
    return bisect.bisect_right(th.noise_boundaries, snr)


def interval_to_noise_label(index: int) -> str:
    """Fold nine intervals onto seven labels by merging the two outermost on each side."""
    n_labels = len(NOISE_LEVELS)
    return NOISE_LEVELS[min(max(index - 1, 0), n_labels - 1)]


def tag_noise_level(snr: float, th: BasicTagThresholds = DEFAULT_THRESHOLDS) -> str:
    return interval_to_noise_label(noise_interval(snr, th))


@dataclass
class GenderVote:
    label: str
    counts: dict[str, int]
    n_classified: int
    tie: bool = False


def tag_gender_scaled(
    speaker: SpeakerRecord, classifier, th: BasicTagThresholds = DEFAULT_THRESHOLDS
) -> GenderVote:
    """Majority gender over at most ``max_gender_utterances`` clips, in utterance order.

    An exact tie goes to the label of the first classified clip.
    """
    refs = speaker.audio_refs[: th.max_gender_utterances]
    if not refs:
        raise ValueError(f"{speaker.speaker_id}: no utterances to classify")
    labels = [classifier.classify_gender(ref) for ref in refs]
    counts = Counter(labels)
    ranked = counts.most_common()
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        logger.warning("%s: gender tie %s, using first clip's label", speaker.speaker_id, dict(counts))
        return GenderVote(labels[0], dict(counts), len(labels), tie=True)
    return GenderVote(ranked[0][0], dict(counts), len(labels))


@dataclass
class BasicTagReport:
    classified_gender: list[str] = field(default_factory=list)
    gender_ties: list[str] = field(default_factory=list)
    missing_gender: list[str] = field(default_factory=list)
    mean_pitch: dict[str, float] = field(default_factory=dict)


def tag_basic(
    records: Sequence[UtteranceRecord],
    backends,
    th: BasicTagThresholds = DEFAULT_THRESHOLDS,
) -> tuple[list[UtteranceRecord], BasicTagReport]:
    """Add gender, pitch, speed and noise tags to every record.

    Gender already tagged on a speaker's records (e.g. propagated) wins, then
    ``meta["speaker_gender"]`` from dataset metadata, then the classifier vote. Pitch level uses the mean
    pitch across all of a speaker's utterances.
    """
    report = BasicTagReport()
    speakers = group_by_speaker(records)
    declared = {}
    for r in records:
        if r.meta.get("speaker_gender") in ("male", "female"):
            declared.setdefault(r.speaker_id, r.meta["speaker_gender"])
    per_speaker: dict[str, list[str]] = {}
    for s in speakers:
        gender = s.gender_tag
        if gender == "unknown":
            gender = declared.get(s.speaker_id, "unknown")
        if gender == "unknown" and backends.gender_classifier is not None:
            vote = tag_gender_scaled(s, backends.gender_classifier, th)
            gender = vote.label
            report.classified_gender.append(s.speaker_id)
            if vote.tie:
                report.gender_ties.append(s.speaker_id)
        tags = []
        if gender == "unknown":
            report.missing_gender.append(s.speaker_id)
        else:
            tags.append(gender)
            pitches = [backends.pitch_estimator.estimate_pitch(ref) for ref in s.audio_refs]
            mean = math.fsum(pitches) / len(pitches)
            report.mean_pitch[s.speaker_id] = mean
            tags.append(tag_pitch_level(mean, gender, th))
        per_speaker[s.speaker_id] = tags

    out = []
    for r in records:
        tags = list(per_speaker[r.speaker_id])
        if r.transcript.strip() and r.duration_s:
            tags.append(tag_speed_level(backends.phoneme_counter.count_phonemes(r.transcript), r.duration_s, th))
        snr = r.snr_db if r.snr_db is not None else backends.snr_estimator.estimate_snr(r.audio_ref)
        tags.append(tag_noise_level(snr, th))
        out.append(replace(r, snr_db=snr).add_tags(tags))
    return out, report
