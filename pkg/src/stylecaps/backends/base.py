"""Backend contracts, shared errors and the rating parser."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Protocol, Sequence, runtime_checkable

import numpy as np


class BackendError(RuntimeError):
    """Base class for failures reported by a backend."""


class BackendUnavailableError(BackendError):
    pass


class UnreadableAudioError(BackendError):
    pass


class MissingPlantError(BackendError):
    """A mock backend was asked for a value that was never planted."""


class UnparseableRatingError(BackendError):
    pass


class ZeroVectorError(ValueError):
    pass


@dataclass(frozen=True)
class DvaScore:
    dominance: float
    valence: float
    arousal: float

    def __post_init__(self):
        for name in ("dominance", "valence", "arousal"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ValueError(f"DVA {name}={v!r} outside [0, 1]")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.dominance, self.valence, self.arousal)


@dataclass(frozen=True)
class Rating:
    value: int
    rationale: str


_RATING_RE = re.compile(r"Rating:\s*(\d+)\s*/\s*5")


def parse_rating(raw: str) -> int:
    """Extract X from the last ``Rating: X/5`` in ``raw``; X must be 1..5."""
    matches = _RATING_RE.findall(raw or "")
    if not matches:
        raise UnparseableRatingError("no 'Rating: X/5' in response")
    value = int(matches[-1])
    if not 1 <= value <= 5:
        raise UnparseableRatingError(f"rating {value} outside 1..5")
    return value


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return (
        resources.files("stylecaps.data").joinpath(name).read_text(encoding="utf-8").rstrip("\n")
    )


def acoustic_rating_prompt(emotion: str) -> str:
    return load_template("acoustic_rating_prompt.txt").replace("{emotion}", emotion)


def style_prompt_request(all_tags_str: str) -> str:
    return load_template("style_prompt_template.txt").replace("{all_tags_str}", all_tags_str)


SEMANTIC_QUERY_TEMPLATE = (
    "Instruct: Given an emotion, retrieve relevant transcript lines whose overall "
    "style/emotions matches the provided emotion.\nQuery: {emotion}"
)


def semantic_query(emotion: str) -> str:
    return SEMANTIC_QUERY_TEMPLATE.replace("{emotion}", emotion)


def cosine(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine of a zero vector")
    return float(np.dot(a, b) / (na * nb))


@runtime_checkable
class SpeakerEmbedder(Protocol):
    def embed_speaker_clip(self, audio_ref: str) -> np.ndarray: ...


@runtime_checkable
class DvaClassifier(Protocol):
    def classify_dva(self, audio_ref: str) -> DvaScore: ...


@runtime_checkable
class TextEmbedder(Protocol):
    def embed_text(self, text: str) -> np.ndarray: ...


@runtime_checkable
class AudioRater(Protocol):
    def rate_emotion_acoustics(self, audio_ref: str, emotion: str) -> Rating: ...


@runtime_checkable
class GenderClassifier(Protocol):
    def classify_gender(self, audio_ref: str) -> str: ...


@runtime_checkable
class PitchEstimator(Protocol):
    def estimate_pitch(self, audio_ref: str) -> float: ...


@runtime_checkable
class PhonemeCounter(Protocol):
    def count_phonemes(self, text: str) -> int: ...


@runtime_checkable
class SnrEstimator(Protocol):
    def estimate_snr(self, audio_ref: str) -> float: ...


@runtime_checkable
class PromptGenerator(Protocol):
    def generate(self, request: str) -> str: ...


@runtime_checkable
class AsrTranscriber(Protocol):
    def transcribe(self, audio_ref: str) -> str: ...


@runtime_checkable
class LanguageIdentifier(Protocol):
    def identify_language(self, text: str) -> str: ...


def check_finite(value: float, what: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise BackendError(f"{what} returned non-finite value {value}")
    return value
