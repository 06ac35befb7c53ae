"""Listening-test metrics, WER and best-of-N sample selection."""

from __future__ import annotations

import itertools
import logging
import math
import re
import statistics
import string
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from stylecaps.taxonomy import load_taxonomy

logger = logging.getLogger(__name__)

Z_95 = 1.96
WER_ACCEPT = 0.20
MAX_SAMPLES = 3
COMPOSITIONAL_LABELS = ("both", "intrinsic_only", "situational_only", "neither")


class EmptyScoresError(ValueError):
    pass


class EmptyReferenceError(ValueError):
    pass


@dataclass(frozen=True)
class RaterResponse:
    item_id: str
    rater_id: str
    likert: int | None = None
    tag_heard: bool | None = None
    tags_heard_compositional: frozenset[str] | None = None
    tag: str | None = None

    def __post_init__(self):
        if self.likert is None and self.tag_heard is None and self.tags_heard_compositional is None:
            raise ValueError(f"{self.item_id}/{self.rater_id}: response carries no answer")
        if self.likert is not None and not (isinstance(self.likert, int) and 1 <= self.likert <= 5):
            raise ValueError(f"likert must be an integer 1..5, got {self.likert!r}")
        if self.tags_heard_compositional is not None:
            heard = frozenset(self.tags_heard_compositional)
            if not heard <= {"intrinsic", "situational"}:
                raise ValueError(f"unexpected compositional labels {sorted(heard)}")
            object.__setattr__(self, "tags_heard_compositional", heard)

    @classmethod
    def from_dict(cls, d: dict) -> "RaterResponse":
        comp = d.get("tags_heard_compositional")
        return cls(
            item_id=str(d["item_id"]),
            rater_id=str(d["rater_id"]),
            likert=d.get("likert"),
            tag_heard=d.get("tag_heard"),
            tags_heard_compositional=None if comp is None else frozenset(comp),
            tag=d.get("tag"),
        )


# --------------------------------------------------------------------------- tag recall


@dataclass
class TagRecallResult:
    per_tag: dict[str, float]
    support: dict[str, int]
    macro: float
    excluded: list[str]


def tag_recall(
    responses_by_tag: dict[str, Sequence[RaterResponse]], item_majority: bool = False
) -> TagRecallResult:
    """Fraction of responses (or items, under ``item_majority``) in which the tag was heard.

    Tags without any usable response are left out of the macro average.
    """
    per_tag: dict[str, float] = {}
    support: dict[str, int] = {}
    excluded = []
    for tag in sorted(responses_by_tag):
        votes = [r for r in responses_by_tag[tag] if r.tag_heard is not None]
        if item_majority:
            by_item: dict[str, list[bool]] = defaultdict(list)
            for r in votes:
                by_item[r.item_id].append(r.tag_heard)
            outcomes = [sum(v) * 2 > len(v) for v in by_item.values()]
        else:
            outcomes = [r.tag_heard for r in votes]
        if not outcomes:
            logger.warning("tag %r has no responses; excluded from the average", tag)
            excluded.append(tag)
            continue
        per_tag[tag] = sum(outcomes) / len(outcomes)
        support[tag] = len(outcomes)
    macro = math.fsum(per_tag.values()) / len(per_tag) if per_tag else float("nan")
    return TagRecallResult(per_tag, support, macro, excluded)


def group_by_tag(responses: Iterable[RaterResponse]) -> dict[str, list[RaterResponse]]:
    out: dict[str, list[RaterResponse]] = defaultdict(list)
    for r in responses:
        if r.tag is None:
            raise ValueError(f"{r.item_id}: response has no tag")
        out[r.tag].append(r)
    return dict(out)


def split_recall(result: TagRecallResult) -> dict[str, float]:
    """Macro recall restricted to intrinsic and to situational tags."""
    taxonomy = load_taxonomy()
    groups: dict[str, list[float]] = {"intrinsic": [], "situational": []}
    for tag, v in result.per_tag.items():
        t = taxonomy.get(tag)
        if t is not None:
            groups[t.scope].append(v)
    return {k: (math.fsum(v) / len(v) if v else float("nan")) for k, v in groups.items()}


# --------------------------------------------------------------------------- MOS


def mos(scores: Sequence[float]) -> tuple[float, float]:
    """Mean and 95% half-width under the normal approximation (NaN width for a single score)."""
    n = len(scores)
    if n == 0:
        raise EmptyScoresError("no scores")
    mean = math.fsum(scores) / n
    if n == 1:
        return mean, float("nan")
    return mean, Z_95 * statistics.stdev(scores) / math.sqrt(n)


# --------------------------------------------------------------------------- WER

_PUNCT = re.compile(f"[{re.escape(string.punctuation)}]")


def normalize_text(text: str) -> list[str]:
    return _PUNCT.sub("", text.lower()).split()


def word_edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    prev = list(range(len(hyp) + 1))
    for i, rw in enumerate(ref, 1):
        cur = [i] + [0] * len(hyp)
        for j, hw in enumerate(hyp, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (rw != hw))
        prev = cur
    return prev[-1]


def normalized_wer(
    reference: str, hypothesis: str, normalizer: Callable[[str], list[str]] = normalize_text
) -> float:
    ref, hyp = normalizer(reference), normalizer(hypothesis)
    if not ref:
        raise EmptyReferenceError("reference is empty after normalization")
    return word_edit_distance(ref, hyp) / len(ref)


@dataclass(frozen=True)
class SampleChoice:
    index: int
    candidate: tuple
    wer: float
    generated: int
    wers: tuple[float, ...]


def select_best_sample(
    candidates: Iterable[tuple[str, str]],
    reference: str,
    threshold: float = WER_ACCEPT,
    max_samples: int = MAX_SAMPLES,
) -> SampleChoice:
    """Consume ``(audio_ref, asr_hypothesis)`` candidates in order, stopping at the first with WER < threshold.

    ``candidates`` may be a lazy generator; nothing after the accepted sample is
    pulled. If none is accepted the lowest WER wins, earliest on ties.
    """
    wers: list[float] = []
    seen: list[tuple] = []
    for cand in itertools.islice(candidates, max_samples):
        w = normalized_wer(reference, cand[1])
        seen.append(cand)
        wers.append(w)
        if w < threshold:
            return SampleChoice(len(seen) - 1, cand, w, len(seen), tuple(wers))
    if not seen:
        raise ValueError("no candidates")
    best = min(range(len(wers)), key=lambda i: (wers[i], i))
    return SampleChoice(best, seen[best], wers[best], len(seen), tuple(wers))


# --------------------------------------------------------------------------- compositional


def compositional_label(heard: frozenset[str]) -> str:
    if heard == {"intrinsic", "situational"}:
        return "both"
    if heard == {"intrinsic"}:
        return "intrinsic_only"
    if heard == {"situational"}:
        return "situational_only"
    return "neither"


@dataclass
class CompositionalBreakdown:
    fractions: dict[str, float]
    per_item: dict[str, str]
    ties: list[str]


def compositional_breakdown(responses: Iterable[RaterResponse]) -> CompositionalBreakdown:
    """Plurality label per item, then the share of items under each label; unresolved ties count as 'neither'."""
    by_item: dict[str, list[str]] = defaultdict(list)
    for r in responses:
        if r.tags_heard_compositional is not None:
            by_item[r.item_id].append(compositional_label(r.tags_heard_compositional))
    if not by_item:
        raise EmptyScoresError("no compositional responses")
    per_item, ties = {}, []
    for item in sorted(by_item):
        ranked = Counter(by_item[item]).most_common()
        if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
            logger.debug("%s: no majority among %s", item, by_item[item])
            per_item[item] = "neither"
            ties.append(item)
        else:
            per_item[item] = ranked[0][0]
    if ties:
        logger.warning("%d item(s) without a majority label counted as neither", len(ties))
    counts = Counter(per_item.values())
    n = len(per_item)
    return CompositionalBreakdown({k: counts[k] / n for k in COMPOSITIONAL_LABELS}, per_item, ties)
