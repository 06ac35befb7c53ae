"""Style-tag vocabulary, source-label remapping and per-emotion filter metadata.

The vocabulary, remap table and emotion table ship as line-delimited JSON files
under ``stylecaps/data``. Field order:

* ``tags.jsonl``      -- name, factor, scope, richness, definition
* ``remap.jsonl``     -- source_label, targets
* ``emotions.jsonl``  -- emotion, arousal_dominance, valence, keywords

Everything here is loaded once and is read-only afterwards.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable, Literal

logger = logging.getLogger(__name__)

Scope = Literal["intrinsic", "situational"]
Richness = Literal["rich", "basic"]
Direction = Literal["high", "low", "none"]

FACTORS = (
    "pitch",
    "texture",
    "clarity",
    "volume",
    "rhythm",
    "accent",
    "pitch-levels",
    "gender",
    "emotion",
    "expressiveness",
    "speed-levels",
)

CLARITY_TAGS = frozenset({"crisp", "slurred", "stammering"})

# Noise-level labels are basic tags outside the 59-tag vocabulary; ordered noisy -> clean.
NOISE_LEVELS = (
    "very noisy",
    "quite noisy",
    "slightly noisy",
    "balanced in clarity",
    "slightly clean",
    "quite clean",
    "very clean",
)
# Token used for the noise slot of evaluation prompts.
CLEAR_TAG = "clear"

# Least-frequent tags found after the first annotation round. The first four were
# dropped from the final vocabulary and are kept here for reference only.
LEAST_FREQUENT_FIRST_ROUND = (
    "lisp",
    "hushed",
    "pitchy",
    "staccato",
    "monotonous",
    "punctuated",
    "vocal fry",
    "guttural",
    "singsong",
    "soft",
    "stammering",
    "shrill",
)
LEGACY_TAGS = frozenset({"lisp", "hushed", "pitchy", "staccato"})

STRENGTH_QUALIFIERS = ("slightly", "very")


class UnknownTagError(KeyError):
    """Raised for a tag name outside the vocabulary."""


class NoEmotionSpecError(KeyError):
    """Raised when an emotion has no filtering metadata."""


@dataclass(frozen=True)
class StyleTag:
    name: str
    factor: str
    scope: Scope
    richness: Richness
    definition: str

    @property
    def is_rich(self) -> bool:
        return self.richness == "rich"

    @property
    def is_intrinsic(self) -> bool:
        return self.scope == "intrinsic"


@dataclass(frozen=True)
class EmotionFilterSpec:
    emotion: str
    arousal_dominance_direction: Direction
    valence_direction: Direction
    excluded_keywords: tuple[str, ...]

    def matches_keyword(self, text: str) -> bool:
        """Case-insensitive substring test against the keyword stems."""
        lowered = text.lower()
        return any(k in lowered for k in self.excluded_keywords)


@dataclass(frozen=True)
class RemapTable:
    entries: dict[str, tuple[str, ...]]

    def __contains__(self, label: str) -> bool:
        return label in self.entries


def normalize_tag_name(name: str) -> str:
    """Lowercase and fold spaces/underscores to hyphens (``Vocal fry`` -> ``vocal-fry``)."""
    return "-".join(name.strip().lower().replace("_", " ").split())


def _read_jsonl(filename: str) -> list[dict]:
    text = resources.files("stylecaps.data").joinpath(filename).read_text(encoding="utf-8")
    return [json.loads(line) for line in text.splitlines() if line.strip()]


class Taxonomy:
    """The tag vocabulary plus lookup helpers."""

    def __init__(self, tags: Iterable[StyleTag]):
        self.tags: tuple[StyleTag, ...] = tuple(tags)
        self._by_name = {t.name: t for t in self.tags}
        if len(self._by_name) != len(self.tags):
            raise ValueError("duplicate tag names in taxonomy")
        for t in self.tags:
            if t.factor not in FACTORS:
                raise ValueError(f"tag {t.name!r} has unknown factor {t.factor!r}")
        self._order = {t.name: i for i, t in enumerate(self.tags)}

    def __len__(self) -> int:
        return len(self.tags)

    def __contains__(self, name: object) -> bool:
        return isinstance(name, str) and normalize_tag_name(name) in self._by_name

    def __iter__(self):
        return iter(self.tags)

    def get(self, name: str) -> StyleTag | None:
        return self._by_name.get(name)

    def lookup(self, name: str) -> StyleTag:
        try:
            return self._by_name[normalize_tag_name(name)]
        except KeyError:
            raise UnknownTagError(name) from None

    def select(
        self,
        *,
        scope: Scope | None = None,
        richness: Richness | None = None,
        factor: str | None = None,
    ) -> list[StyleTag]:
        return [
            t
            for t in self.tags
            if (scope is None or t.scope == scope)
            and (richness is None or t.richness == richness)
            and (factor is None or t.factor == factor)
        ]

    def names(self, **kwargs) -> list[str]:
        return [t.name for t in self.select(**kwargs)]

    def census(self) -> dict[tuple[str, str], int]:
        counts: dict[tuple[str, str], int] = {}
        for t in self.tags:
            key = (t.scope, t.richness)
            counts[key] = counts.get(key, 0) + 1
        return counts

    def factor_of(self, name: str) -> str | None:
        """Factor for a vocabulary tag, ``"noise"`` for noise labels, else ``None``."""
        if name in NOISE_LEVELS or name == CLEAR_TAG:
            return "noise"
        tag = self._by_name.get(name)
        return tag.factor if tag else None

    def sort_key(self, name: str) -> tuple[int, str]:
        if name in self._order:
            return (self._order[name], name)
        if name in NOISE_LEVELS:
            return (len(self._order) + NOISE_LEVELS.index(name), name)
        return (len(self._order) + len(NOISE_LEVELS), name)

    def sort_tags(self, names: Iterable[str]) -> list[str]:
        """Deduplicate and order tags by vocabulary position (noise labels last)."""
        return sorted(set(names), key=self.sort_key)


@lru_cache(maxsize=1)
def load_taxonomy() -> Taxonomy:
    return Taxonomy(
        StyleTag(
            name=row["name"],
            factor=row["factor"],
            scope=row["scope"],
            richness=row["richness"],
            definition=row["definition"],
        )
        for row in _read_jsonl("tags.jsonl")
    )


def lookup_tag(name: str) -> StyleTag:
    return load_taxonomy().lookup(name)


@lru_cache(maxsize=1)
def load_remap_table() -> RemapTable:
    taxonomy = load_taxonomy()
    entries: dict[str, tuple[str, ...]] = {}
    for row in _read_jsonl("remap.jsonl"):
        targets = tuple(row["targets"])
        for t in targets:
            if t not in taxonomy:
                raise ValueError(f"remap target {t!r} is not a vocabulary tag")
        entries[row["source_label"]] = targets
    return RemapTable(entries)


def remap_source_label(source_label: str, table: RemapTable | None = None) -> list[StyleTag]:
    """Map a source-dataset style label onto vocabulary tags.

    ``"slightly X"`` labels are discarded and ``"very X"`` is treated as ``X``.
    Labels absent from the table that are already vocabulary names map to
    themselves; anything else maps to ``[]`` and is logged.
    """
    table = table or load_remap_table()
    taxonomy = load_taxonomy()
    label = " ".join(source_label.strip().lower().split())
    words = label.split(" ", 1)
    if len(words) == 2 and words[0] in STRENGTH_QUALIFIERS:
        if words[0] == "slightly":
            return []
        label = words[1]
    if label in table.entries:
        return [taxonomy.lookup(t) for t in table.entries[label]]
    if label in taxonomy:
        return [taxonomy.lookup(label)]
    logger.info("unmapped source label %r discarded", source_label)
    return []


@lru_cache(maxsize=1)
def load_emotion_specs() -> dict[str, EmotionFilterSpec]:
    specs = {}
    for row in _read_jsonl("emotions.jsonl"):
        specs[row["emotion"]] = EmotionFilterSpec(
            emotion=row["emotion"],
            arousal_dominance_direction=row["arousal_dominance"],
            valence_direction=row["valence"],
            excluded_keywords=tuple(k.lower() for k in row["keywords"]),
        )
    return specs


def emotion_filter_spec(emotion: str) -> EmotionFilterSpec:
    try:
        return load_emotion_specs()[normalize_tag_name(emotion)]
    except KeyError:
        raise NoEmotionSpecError(emotion) from None


def is_legacy_tag(name: str) -> bool:
    return name.strip().lower() in LEGACY_TAGS
