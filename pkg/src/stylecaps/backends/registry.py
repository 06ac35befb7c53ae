from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Any, Iterable, Mapping

from stylecaps.backends.base import BackendUnavailableError
from stylecaps.backends.http import HttpBackend
from stylecaps.backends import mock

ROLES = (
    "speaker_embedder",
    "dva_classifier",
    "text_embedder",
    "audio_rater",
    "gender_classifier",
    "pitch_estimator",
    "phoneme_counter",
    "snr_estimator",
    "prompt_generator",
    "asr_transcriber",
    "language_identifier",
)

# Sampling parameters sent to generative backends unless the config overrides them.
GENERATION_DEFAULTS = {
    "prompt_generator": {"temperature": 0.6, "top_p": 1.0, "max_new_tokens": 256},
    "audio_rater": {"temperature": 1.0, "top_p": 0.95, "max_new_tokens": 2048},
}


@dataclass
class BackendRegistry:
    speaker_embedder: Any = None
    dva_classifier: Any = None
    text_embedder: Any = None
    audio_rater: Any = None
    gender_classifier: Any = None
    pitch_estimator: Any = None
    phoneme_counter: Any = None
    snr_estimator: Any = None
    prompt_generator: Any = None
    asr_transcriber: Any = None
    language_identifier: Any = None

    def require(self, *roles: str) -> None:
        missing = [r for r in roles if getattr(self, r) is None]
        if missing:
            raise BackendUnavailableError(f"unbound backends: {', '.join(missing)}")

    def bound(self) -> list[str]:
        return [f.name for f in fields(self) if getattr(self, f.name) is not None]


def mock_registry(records: Iterable[Any] = (), seed: int = 0) -> BackendRegistry:
    """Every role bound to its mock, fed with plants from ``records``."""
    plants = mock.Plants.from_records(records)
    return BackendRegistry(
        speaker_embedder=mock.MockSpeakerEmbedder(plants, seed=seed),
        dva_classifier=mock.MockDvaClassifier(plants),
        text_embedder=mock.MockTextEmbedder(),
        audio_rater=mock.MockAudioRater(plants),
        gender_classifier=mock.MockGenderClassifier(plants),
        pitch_estimator=mock.MockPitchEstimator(plants),
        phoneme_counter=mock.MockPhonemeCounter(),
        snr_estimator=mock.MockSnrEstimator(plants),
        prompt_generator=mock.MockPromptGenerator(),
        asr_transcriber=mock.MockAsrTranscriber(plants),
        language_identifier=mock.MockLanguageIdentifier(plants.languages),
    )


def build_registry(
    config: Mapping[str, Any] | None,
    records: Iterable[Any] = (),
    force_mock: bool = False,
    seed: int = 0,
) -> BackendRegistry:
    """Bind roles from a ``backends`` config section.

    Each role entry is ``{kind: mock|http|none, endpoint, model_id, seed, ...}``.
    Roles missing from the config stay unbound unless ``force_mock`` is set.
    """
    config = dict(config or {})
    unknown = set(config) - set(ROLES)
    if unknown:
        raise ValueError(f"unknown backend roles: {sorted(unknown)}")
    mocks = mock_registry(records, seed=seed)
    if force_mock:
        return mocks
    registry = BackendRegistry()
    for role in ROLES:
        spec = dict(config.get(role) or {})
        kind = spec.pop("kind", "none")
        if kind == "none":
            continue
        if kind == "mock":
            if "seed" in spec and role == "speaker_embedder":
                setattr(registry, role, mock.MockSpeakerEmbedder(mocks.speaker_embedder.plants, seed=int(spec["seed"])))
            else:
                setattr(registry, role, getattr(mocks, role))
        elif kind == "http":
            if "endpoint" not in spec:
                raise ValueError(f"backend {role}: http kind needs an endpoint")
            generation = {**GENERATION_DEFAULTS.get(role, {})}
            for key in ("temperature", "top_p", "max_new_tokens"):
                if key in spec:
                    generation[key] = spec[key]
            setattr(
                registry,
                role,
                HttpBackend(
                    spec["endpoint"],
                    model_id=spec.get("model_id", ""),
                    timeout=float(spec.get("timeout", 60.0)),
                    generation=generation if role in GENERATION_DEFAULTS else None,
                ),
            )
        else:
            raise ValueError(f"backend {role}: unknown kind {kind!r}")
    return registry
