"""JSON-over-HTTP adapter for model servers hosting the real reference models.

Each contract method is a ``POST {endpoint}/{operation}`` with a JSON body that
always carries ``model`` (the configured model id) plus the inputs below, and
returns a JSON object:

=======================  ==========================  ================================
operation                request fields              response fields
=======================  ==========================  ================================
embed_speaker_clip       audio_ref                   embedding: [float]
classify_dva             audio_ref                   dominance, valence, arousal
embed_text               text                        embedding: [float]
rate_emotion_acoustics   audio_ref, emotion, prompt  text
classify_gender          audio_ref                   gender
estimate_pitch           audio_ref                   pitch_hz
count_phonemes           text                        count
estimate_snr             audio_ref                   snr_db
transcribe               audio_ref                   text
identify_language        text                        language
generate                 prompt, sampling params     text
=======================  ==========================  ================================

Status 422 means the audio could not be read; 413 means the clip exceeds the
model's context and is reported as unavailable rather than truncated.
"""

from __future__ import annotations

from typing import Any

import httpx
import numpy as np

from stylecaps.backends.base import (
    BackendError,
    BackendUnavailableError,
    DvaScore,
    Rating,
    UnreadableAudioError,
    ZeroVectorError,
    acoustic_rating_prompt,
    check_finite,
    parse_rating,
)


class HttpBackend:
    def __init__(
        self,
        endpoint: str,
        model_id: str = "",
        timeout: float = 60.0,
        client: httpx.Client | None = None,
        generation: dict[str, Any] | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model_id = model_id
        self.client = client or httpx.Client(timeout=timeout)
        self.generation = dict(generation or {})

    def _call(self, operation: str, **payload: Any) -> dict[str, Any]:
        url = f"{self.endpoint}/{operation}"
        try:
            resp = self.client.post(url, json={"model": self.model_id, **payload})
        except httpx.HTTPError as exc:
            raise BackendUnavailableError(f"{operation}: {exc}") from exc
        if resp.status_code == 422:
            raise UnreadableAudioError(f"{operation}: {resp.text}")
        if resp.status_code == 413:
            raise BackendUnavailableError(f"{operation}: input exceeds model context")
        if resp.status_code >= 400:
            raise BackendUnavailableError(f"{operation}: HTTP {resp.status_code}")
        try:
            body = resp.json()
        except ValueError as exc:
            raise BackendError(f"{operation}: non-JSON response") from exc
        if not isinstance(body, dict):
            raise BackendError(f"{operation}: expected a JSON object")
        return body

    def _field(self, body: dict[str, Any], key: str, operation: str) -> Any:
        if key not in body:
            raise BackendError(f"{operation}: response lacks {key!r}")
        return body[key]

    def embed_speaker_clip(self, audio_ref: str) -> np.ndarray:
        body = self._call("embed_speaker_clip", audio_ref=audio_ref)
        return np.asarray(self._field(body, "embedding", "embed_speaker_clip"), dtype=np.float64)

    def classify_dva(self, audio_ref: str) -> DvaScore:
        body = self._call("classify_dva", audio_ref=audio_ref)
        return DvaScore(
            dominance=float(self._field(body, "dominance", "classify_dva")),
            valence=float(self._field(body, "valence", "classify_dva")),
            arousal=float(self._field(body, "arousal", "classify_dva")),
        )

    def embed_text(self, text: str) -> np.ndarray:
        if not text.strip():
            raise ZeroVectorError("empty text has no embedding")
        body = self._call("embed_text", text=text)
        return np.asarray(self._field(body, "embedding", "embed_text"), dtype=np.float64)

    def rate_emotion_acoustics(self, audio_ref: str, emotion: str) -> Rating:
        body = self._call(
            "rate_emotion_acoustics",
            audio_ref=audio_ref,
            emotion=emotion,
            prompt=acoustic_rating_prompt(emotion),
            **self.generation,
        )
        raw = str(self._field(body, "text", "rate_emotion_acoustics"))
        return Rating(value=parse_rating(raw), rationale=raw)

    def classify_gender(self, audio_ref: str) -> str:
        g = self._field(self._call("classify_gender", audio_ref=audio_ref), "gender", "classify_gender")
        if g not in ("male", "female"):
            raise BackendError(f"classify_gender returned {g!r}")
        return g

    def estimate_pitch(self, audio_ref: str) -> float:
        body = self._call("estimate_pitch", audio_ref=audio_ref)
        return check_finite(self._field(body, "pitch_hz", "estimate_pitch"), "estimate_pitch")

    def count_phonemes(self, text: str) -> int:
        if not text.strip():
            return 0
        return int(self._field(self._call("count_phonemes", text=text), "count", "count_phonemes"))

    def estimate_snr(self, audio_ref: str) -> float:
        body = self._call("estimate_snr", audio_ref=audio_ref)
        return check_finite(self._field(body, "snr_db", "estimate_snr"), "estimate_snr")

    def transcribe(self, audio_ref: str) -> str:
        return str(self._field(self._call("transcribe", audio_ref=audio_ref), "text", "transcribe"))

    def identify_language(self, text: str) -> str:
        body = self._call("identify_language", text=text)
        return str(self._field(body, "language", "identify_language"))

    def generate(self, request: str) -> str:
        body = self._call("generate", prompt=request, **self.generation)
        return str(self._field(body, "text", "generate"))
