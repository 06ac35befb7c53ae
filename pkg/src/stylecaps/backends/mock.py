"""Deterministic mock backends driven by planted per-clip values.

Plants are keyed by ``audio_ref`` and usually come from the ``meta`` field of
manifest records (see :meth:`Plants.from_records`). Recognised keys:

``voice_seed``   speaker-embedding cluster id (clips sharing it embed close together)
``dva``          ``[dominance, valence, arousal]``
``ratings``      ``{emotion: int | raw response text}``
``gender``       ``"male"`` / ``"female"``
``pitch_hz``     mean pitch
``snr_db``       signal-to-noise ratio
``asr_text``     transcription returned by the ASR mock
``language``     language of the transcript (default ``"en"``)
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np

from stylecaps.seeding import derive_seed
from stylecaps.backends.base import (
    BackendError,
    DvaScore,
    MissingPlantError,
    Rating,
    UnreadableAudioError,
    ZeroVectorError,
    check_finite,
    parse_rating,
)

SPEAKER_DIM = 64
TEXT_DIM = 4096
# Norm of the per-clip perturbation relative to the unit voice vector.
CLIP_NOISE = 0.1

_TOKEN_RE = re.compile(r"[a-z0-9']+")


stable_int = derive_seed


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Plants:
    by_ref: dict[str, dict[str, Any]] = field(default_factory=dict)
    languages: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_records(cls, records: Iterable[Any]) -> "Plants":
        plants = cls()
        for r in records:
            plants.by_ref[r.audio_ref] = dict(r.meta)
            if "language" in r.meta and r.transcript:
                plants.languages[r.transcript] = r.meta["language"]
        return plants

    def get(self, audio_ref: str, key: str) -> Any:
        try:
            entry = self.by_ref[audio_ref]
        except KeyError:
            raise UnreadableAudioError(f"cannot resolve {audio_ref!r}") from None
        if key not in entry:
            raise MissingPlantError(f"no planted {key!r} for {audio_ref!r}")
        return entry[key]


class MockSpeakerEmbedder:
    """Clip embedding = unit voice vector for the planted voice seed + small clip noise."""

    def __init__(self, plants: Plants, seed: int = 0, dim: int = SPEAKER_DIM, noise: float = CLIP_NOISE):
        self.plants = plants
        self.seed = seed
        self.dim = dim
        self.noise = noise

    def voice_vector(self, voice_seed: Any) -> np.ndarray:
        """Unit vector for a voice; a list of ``[seed, weight]`` pairs blends voices."""
        if isinstance(voice_seed, (list, tuple)):
            v = sum(w * self.voice_vector(s) for s, w in voice_seed)
        else:
            rng = np.random.default_rng(stable_int("voice", self.seed, voice_seed))
            v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def embed_speaker_clip(self, audio_ref: str) -> np.ndarray:
        base = self.voice_vector(self.plants.get(audio_ref, "voice_seed"))
        rng = np.random.default_rng(stable_int("clip", self.seed, audio_ref))
        e = rng.standard_normal(self.dim)
        return base + self.noise * e / np.linalg.norm(e)


class MockDvaClassifier:
    def __init__(self, plants: Plants):
        self.plants = plants

    def classify_dva(self, audio_ref: str) -> DvaScore:
        d, v, a = self.plants.get(audio_ref, "dva")
        return DvaScore(dominance=d, valence=v, arousal=a)


class MockTextEmbedder:
    """Bag-of-token hashing; identical texts have cosine 1, token-disjoint texts 0."""

    def __init__(self, dim: int = TEXT_DIM):
        self.dim = dim

    def embed_text(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise ZeroVectorError("empty text has no embedding")
        v = np.zeros(self.dim)
        for tok in tokens:
            v[stable_int("tok", tok) % self.dim] += 1.0
        return v


class MockAudioRater:
    """Returns planted ratings; clips without a plant for the emotion get 1/5."""

    def __init__(self, plants: Plants):
        self.plants = plants

    def raw_response(self, audio_ref: str, emotion: str) -> str:
        entry = self.plants.by_ref.get(audio_ref)
        if entry is None:
            raise UnreadableAudioError(f"cannot resolve {audio_ref!r}")
        planted = entry.get("ratings", {}).get(emotion, 1)
        if isinstance(planted, str):
            return planted
        return f"The delivery was judged against {emotion}. Rating: {planted}/5"

    def rate_emotion_acoustics(self, audio_ref: str, emotion: str) -> Rating:
        raw = self.raw_response(audio_ref, emotion)
        return Rating(value=parse_rating(raw), rationale=raw)


class MockGenderClassifier:
    def __init__(self, plants: Plants):
        self.plants = plants

    def classify_gender(self, audio_ref: str) -> str:
        g = self.plants.get(audio_ref, "gender")
        if g not in ("male", "female"):
            raise BackendError(f"planted gender {g!r} invalid")
        return g


class MockPitchEstimator:
    def __init__(self, plants: Plants):
        self.plants = plants

    def estimate_pitch(self, audio_ref: str) -> float:
        return check_finite(self.plants.get(audio_ref, "pitch_hz"), "pitch estimator")


class MockSnrEstimator:
    def __init__(self, plants: Plants):
        self.plants = plants

    def estimate_snr(self, audio_ref: str) -> float:
        return check_finite(self.plants.get(audio_ref, "snr_db"), "snr estimator")


class MockPhonemeCounter:
    """Letter count as a phoneme proxy."""

    def count_phonemes(self, text: str) -> int:
        return sum(1 for ch in text.lower() if "a" <= ch <= "z")


class MockAsrTranscriber:
    def __init__(self, plants: Plants):
        self.plants = plants

    def transcribe(self, audio_ref: str) -> str:
        return str(self.plants.get(audio_ref, "asr_text"))


class MockLanguageIdentifier:
    def __init__(self, languages: Mapping[str, str] | None = None):
        self.languages = dict(languages or {})

    def identify_language(self, text: str) -> str:
        if not text.strip():
            return "und"
        return self.languages.get(text, "en")


class MockPromptGenerator:
    """Turns the keyword line of the request into a fixed-form description."""

    def generate(self, request: str) -> str:
        lines = [ln for ln in request.splitlines() if ln.strip()]
        # The keyword line is the one right before the trailing "Description:" slot.
        keywords = lines[-2] if len(lines) >= 2 else ""
        return f"Description: Speech described as {keywords.strip()}."
