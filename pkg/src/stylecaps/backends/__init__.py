"""Model backends: contracts, deterministic mocks and an HTTP adapter."""

from stylecaps.backends.base import (
    BackendError,
    BackendUnavailableError,
    DvaScore,
    MissingPlantError,
    Rating,
    UnparseableRatingError,
    UnreadableAudioError,
    ZeroVectorError,
    acoustic_rating_prompt,
    cosine,
    parse_rating,
    semantic_query,
    style_prompt_request,
)
from stylecaps.backends.http import HttpBackend
from stylecaps.backends.mock import Plants
from stylecaps.backends.registry import ROLES, BackendRegistry, build_registry, mock_registry

__all__ = [
    "BackendError",
    "BackendRegistry",
    "BackendUnavailableError",
    "DvaScore",
    "HttpBackend",
    "MissingPlantError",
    "Plants",
    "ROLES",
    "Rating",
    "UnparseableRatingError",
    "UnreadableAudioError",
    "ZeroVectorError",
    "acoustic_rating_prompt",
    "build_registry",
    "cosine",
    "mock_registry",
    "parse_rating",
    "semantic_query",
    "style_prompt_request",
]
