"""Turn tag sets into style prompts (one or two per record)."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from stylecaps.backends.base import BackendError, style_prompt_request
from stylecaps.corpus import StylePromptSet, UtteranceRecord
from stylecaps.taxonomy import load_taxonomy

logger = logging.getLogger(__name__)

SCALED_SOURCES = ("emilia",)

# Slot order inside the comma-joined keyword string.
_SLOTS = ("gender", "rich-intrinsic", "rich-situational", "pitch-levels", "speed-levels", "noise")


class NoTagsError(ValueError):
    pass


def _slot(tag: str) -> str | None:
    taxonomy = load_taxonomy()
    factor = taxonomy.factor_of(tag)
    if factor in ("gender", "pitch-levels", "speed-levels", "noise"):
        return factor
    t = taxonomy.get(tag)
    if t is None:
        return None
    if t.is_rich:
        return "rich-intrinsic" if t.is_intrinsic else "rich-situational"
    return None


def order_tags(tags: Iterable[str]) -> list[str]:
    """Gender, rich intrinsic, rich situational, pitch, speed, noise; vocabulary order within a slot."""
    taxonomy = load_taxonomy()
    known = []
    for t in set(tags):
        slot = _slot(t)
        if slot is None:
            logger.warning("tag %r has no prompt slot, skipped", t)
            continue
        known.append((_SLOTS.index(slot), taxonomy.sort_key(t), t))
    return [t for *_, t in sorted(known)]


def plan_prompt_tag_sets(
    record: UtteranceRecord, scaled_sources: Sequence[str] = SCALED_SOURCES
) -> list[list[str]]:
    """Tag lists to render for a record.

    Records with both rich intrinsic and rich situational tags get two lists:
    the situational-only one (human data) or the intrinsic-only one (scaled
    data), then the full one. Basic tags go into every list.
    """
    groups: dict[str, list[str]] = {s: [] for s in _SLOTS}
    for t in record.tags:
        slot = _slot(t)
        if slot is not None:
            groups[slot].append(t)
    basics = [t for s in ("gender", "pitch-levels", "speed-levels", "noise") for t in groups[s]]
    intrinsic, situational = groups["rich-intrinsic"], groups["rich-situational"]
    full = order_tags(basics + intrinsic + situational)
    if not full:
        raise NoTagsError(record.utterance_id)
    if intrinsic and situational:
        partial = intrinsic if record.source_dataset in scaled_sources else situational
        return [order_tags(basics + partial), full]
    return [full]


def fallback_prompt(tags: Sequence[str]) -> str:
    """Deterministic description used when no generator is bound or it fails."""
    tags = order_tags(tags)
    if not tags:
        raise NoTagsError("empty tag list")
    taxonomy = load_taxonomy()
    gender = next((t for t in tags if taxonomy.factor_of(t) == "gender"), None)
    rest = [t for t in tags if t != gender]
    head = f"A {gender} voice" if gender else "A voice"
    if not rest:
        return head + "."
    return f"{head} that is {', '.join(rest)}."


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    tags: tuple[str, ...]
    source: str  # "backend" or "fallback"


def _clean_generation(text: str) -> str:
    text = text.strip()
    if text.lower().startswith("description:"):
        text = text[len("description:"):].strip()
    return text.split("\n\n", 1)[0].strip()


def missing_keywords(text: str, tags: Sequence[str]) -> list[str]:
    lowered = text.lower()
    return [t for t in tags if t.lower() not in lowered]


def render_prompt(tags: Sequence[str], generator=None) -> RenderedPrompt:
    ordered = order_tags(tags)
    if not ordered:
        raise NoTagsError("empty tag list")
    if generator is not None:
        try:
            text = _clean_generation(generator.generate(style_prompt_request(", ".join(ordered))))
        except BackendError as exc:
            logger.warning("prompt generator failed (%s); using fallback", exc)
        else:
            if text:
                absent = missing_keywords(text, ordered)
                if absent:
                    logger.info("generated prompt omits %s (synonyms allowed)", absent)
                return RenderedPrompt(text, tuple(ordered), "backend")
            logger.warning("prompt generator returned nothing; using fallback")
    return RenderedPrompt(fallback_prompt(ordered), tuple(ordered), "fallback")


def generate_prompt_sets(
    records: Sequence[UtteranceRecord],
    generator=None,
    scaled_sources: Sequence[str] = SCALED_SOURCES,
    max_in_flight: int = 1,
) -> list[StylePromptSet]:
    plans = [(r.utterance_id, plan_prompt_tag_sets(r, scaled_sources)) for r in records]
    flat = [tags for _, tag_lists in plans for tags in tag_lists]
    if max_in_flight > 1 and len(flat) > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            rendered = list(pool.map(lambda t: render_prompt(t, generator), flat))
    else:
        rendered = [render_prompt(t, generator) for t in flat]
    out = []
    i = 0
    for uid, tag_lists in plans:
        chunk = rendered[i : i + len(tag_lists)]
        i += len(tag_lists)
        out.append(
            StylePromptSet(
                utterance_id=uid,
                prompts=tuple(p.text for p in chunk),
                prompt_tag_sets=tuple(p.tags for p in chunk),
                sources=tuple(p.source for p in chunk),
            )
        )
    return out
