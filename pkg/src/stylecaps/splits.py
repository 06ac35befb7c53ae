"""Train/dev/holdout assignment, evaluation sets and the upsampled training mixture."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from stylecaps.corpus import SpeakerRecord, UtteranceRecord, group_by_speaker
from stylecaps.prompts import render_prompt
from stylecaps.seeding import derive_seed
from stylecaps.taxonomy import CLEAR_TAG, load_taxonomy

logger = logging.getLogger(__name__)

HOLDOUT_SPEAKERS = 64
# Each (tag, gender) cell wants this many holdout speakers.
COVERAGE_DEMAND = 2
# Never move more than this share of VoxCeleb speakers into holdout.
MAX_HOLDOUT_FRACTION = 0.5
VOX_DEV_FRACTION = 0.1
RECORD_DEV_FRACTION = 0.1
RECORD_HOLDOUT_FRACTION = 0.1
SPLIT_PRIORITY = ("train", "dev", "holdout")

MAX_CLIPS_PER_TAG = 5
OPTIONAL_BASIC_P = 0.5

COMPOSITIONAL_INTRINSIC = (
    "shrill", "deep", "husky", "guttural", "soft", "authoritative",
    "crisp", "slurred", "hesitant", "flowing", "british", "canadian",
)
COMPOSITIONAL_SITUATIONAL = (
    "desirous", "animated", "sarcastic", "pained", "admiring",
    "whispered", "awed", "anxious", "enunciated", "sleepy",
)
COMPOSITIONAL_GENDERS = ("male", "female")
MIN_WORDS, MAX_WORDS = 6, 10

UPSAMPLE_FACTORS = {
    "voxceleb": 2,
    "expresso": 6,
    "ears": 6,
    "scaled_situational": 2,
}


class InsufficientPoolError(ValueError):
    pass


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def normalize_transcript(text: str) -> str:
    return " ".join(text.casefold().split())


def _shuffled(items: Sequence, seed: int) -> list:
    order = np.random.default_rng(seed).permutation(len(items))
    return [items[i] for i in order]


# --------------------------------------------------------------------------- splits


def _holdout_tags(records: Sequence[UtteranceRecord]) -> set[str]:
    """Rich intrinsic tags that survive the stricter holdout agreement rule."""
    taxonomy = load_taxonomy()
    tags: set[str] = set()
    for r in records:
        if "consensus_holdout" in r.meta:
            tags.update(r.meta["consensus_holdout"])
            accent = r.tag_in_factor("accent")
            if accent:
                tags.add(accent)
        else:
            tags.update(t for t in r.tags if (s := taxonomy.get(t)) and s.is_rich and s.is_intrinsic)
    return tags


@dataclass
class HoldoutSelection:
    speakers: list[str]
    coverage: dict[str, dict[str, int]]
    deficits: dict[str, dict[str, int]]


def select_holdout_speakers(
    speakers: Sequence[SpeakerRecord],
    speaker_tags: Mapping[str, set[str]],
    seed: int = 0,
    cap: int = HOLDOUT_SPEAKERS,
    demand: int = COVERAGE_DEMAND,
) -> HoldoutSelection:
    """Greedy multi-cover of (tag, gender) cells.

    Each round takes the speaker covering the most still-unmet cells; ties go to
    the earlier speaker in a seeded shuffle. Stops at ``cap`` or when nothing
    adds coverage.
    """
    need: dict[tuple[str, str], int] = {}
    cells: dict[str, list[tuple[str, str]]] = {}
    for s in speakers:
        if s.gender_tag not in COMPOSITIONAL_GENDERS:
            cells[s.speaker_id] = []
            continue
        cells[s.speaker_id] = [(t, s.gender_tag) for t in sorted(speaker_tags.get(s.speaker_id, ()))]
    all_tags = sorted({t for sid in cells for t, _ in cells[sid]})
    for t in all_tags:
        for g in COMPOSITIONAL_GENDERS:
            need[(t, g)] = demand

    remaining = _shuffled([s.speaker_id for s in speakers], seed)
    chosen: list[str] = []
    while len(chosen) < cap and remaining:
        best_i, best_gain = -1, 0
        for i, sid in enumerate(remaining):
            gain = sum(1 for c in cells[sid] if need[c] > 0)
            if gain > best_gain:
                best_i, best_gain = i, gain
        if best_gain == 0:
            break
        sid = remaining.pop(best_i)
        chosen.append(sid)
        for c in cells[sid]:
            need[c] = max(0, need[c] - 1)

    coverage = {t: {g: demand - need[(t, g)] for g in COMPOSITIONAL_GENDERS} for t in all_tags}
    deficits = {
        t: {g: need[(t, g)] for g in COMPOSITIONAL_GENDERS if need[(t, g)]}
        for t in all_tags
        if any(need[(t, g)] for g in COMPOSITIONAL_GENDERS)
    }
    if deficits:
        logger.warning("holdout coverage short for %d tag(s): %s", len(deficits), sorted(deficits))
    return HoldoutSelection(sorted(chosen), coverage, deficits)


def _split_records(records: Sequence[UtteranceRecord], seed: int) -> dict[str, str]:
    """80/10/10 record-level assignment."""
    ids = _shuffled(sorted(r.utterance_id for r in records), seed)
    n = len(ids)
    n_dev = _round_half_up(n * RECORD_DEV_FRACTION)
    n_hold = _round_half_up(n * RECORD_HOLDOUT_FRACTION)
    out = {}
    for i, uid in enumerate(ids):
        out[uid] = "dev" if i < n_dev else "holdout" if i < n_dev + n_hold else "train"
    return out


@dataclass
class SplitResult:
    records: list[UtteranceRecord]
    dropped: list[str] = field(default_factory=list)
    coverage: dict[str, dict[str, int]] = field(default_factory=dict)
    deficits: dict[str, dict[str, int]] = field(default_factory=dict)
    counts: dict[str, dict[str, int]] = field(default_factory=dict)


def _tighten_holdout(r: UtteranceRecord) -> UtteranceRecord:
    if "consensus_holdout" not in r.meta:
        return r
    taxonomy = load_taxonomy()
    strict = set(r.meta["consensus_holdout"])
    kept = [
        t
        for t in r.tags
        if not ((s := taxonomy.get(t)) and s.is_rich and s.is_intrinsic and s.factor != "accent")
        or t in strict
    ]
    return r.with_tags(kept)


def dedupe_transcripts(records: Sequence[UtteranceRecord]) -> tuple[list[UtteranceRecord], list[str]]:
    """Keep each transcript in its highest-priority split only (train > dev > holdout)."""
    best: dict[str, int] = {}
    for r in records:
        key = normalize_transcript(r.transcript)
        if key:
            rank = SPLIT_PRIORITY.index(r.split)
            best[key] = min(best.get(key, rank), rank)
    kept, dropped = [], []
    for r in records:
        key = normalize_transcript(r.transcript)
        if key and SPLIT_PRIORITY.index(r.split) != best[key]:
            dropped.append(r.utterance_id)
        else:
            kept.append(r)
    return kept, dropped


def build_splits(
    records: Sequence[UtteranceRecord],
    seed: int = 0,
    holdout_speakers: int = HOLDOUT_SPEAKERS,
    demand: int = COVERAGE_DEMAND,
) -> SplitResult:
    """Assign every record to train, dev or holdout.

    VoxCeleb is split by speaker (coverage-driven holdout, then 90/10 by
    speaker count); Expresso and labelled EARS 80/10/10 by record; unlabelled
    EARS and every other source go to train. Afterwards a transcript may live
    in one split only. ``counts`` holds the assignment before de-duplication.
    """
    assignment: dict[str, str] = {}
    counts: dict[str, dict[str, int]] = {}

    vox = [r for r in records if r.source_dataset == "voxceleb"]
    speakers = group_by_speaker(vox)
    by_speaker: dict[str, list[UtteranceRecord]] = {}
    for r in vox:
        by_speaker.setdefault(r.speaker_id, []).append(r)
    tags = {sid: _holdout_tags(rs) for sid, rs in by_speaker.items()}
    cap = min(holdout_speakers, int(len(speakers) * MAX_HOLDOUT_FRACTION))
    selection = select_holdout_speakers(speakers, tags, derive_seed(seed, "holdout"), cap, demand)
    held = set(selection.speakers)
    rest = _shuffled(sorted(s.speaker_id for s in speakers if s.speaker_id not in held), derive_seed(seed, "vox"))
    n_dev = _round_half_up(len(rest) * VOX_DEV_FRACTION)
    speaker_split = {sid: "holdout" for sid in held}
    speaker_split.update({sid: ("dev" if i < n_dev else "train") for i, sid in enumerate(rest)})
    for r in vox:
        assignment[r.utterance_id] = speaker_split[r.speaker_id]
    counts["voxceleb_speakers"] = _tally(speaker_split.values())

    for source, pick in (
        ("expresso", lambda r: r.source_dataset == "expresso"),
        ("ears", lambda r: r.source_dataset == "ears" and r.meta.get("labelled", True) is not False),
    ):
        assignment.update(_split_records([r for r in records if pick(r)], derive_seed(seed, source)))
    for r in records:
        assignment.setdefault(r.utterance_id, "train")

    assigned = []
    for r in records:
        new = replace(r, split=assignment[r.utterance_id])
        if new.split == "holdout" and new.source_dataset == "voxceleb":
            new = _tighten_holdout(new)
        assigned.append(new)
    for source in sorted({r.source_dataset for r in assigned}):
        counts[source] = _tally(r.split for r in assigned if r.source_dataset == source)

    kept, dropped = dedupe_transcripts(assigned)
    if dropped:
        logger.info("dropped %d record(s) whose transcript appears in a higher-priority split", len(dropped))
    counts["after_dedup"] = _tally(r.split for r in kept)
    return SplitResult(kept, dropped, selection.coverage, selection.deficits, counts)


def _tally(values) -> dict[str, int]:
    out = {s: 0 for s in SPLIT_PRIORITY}
    for v in values:
        out[v] = out.get(v, 0) + 1
    return out


# --------------------------------------------------------------------------- main eval set


@dataclass(frozen=True)
class EvalItem:
    item_id: str
    utterance_id: str
    rich_tag: str
    tags: tuple[str, ...]
    prompt: str
    prompt_source: str
    transcript: str = ""

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "utterance_id": self.utterance_id,
            "rich_tag": self.rich_tag,
            "tags": list(self.tags),
            "prompt": self.prompt,
            "prompt_source": self.prompt_source,
            "transcript": self.transcript,
        }


def pick_speaker_diverse(
    records: Sequence[UtteranceRecord], k: int, seed: int
) -> list[UtteranceRecord]:
    """Round-robin over speakers (seeded order), one clip per speaker per pass."""
    groups: dict[str, list[UtteranceRecord]] = {}
    for r in sorted(records, key=lambda r: r.utterance_id):
        groups.setdefault(r.speaker_id, []).append(r)
    rng = np.random.default_rng(seed)
    order = [sorted(groups)[i] for i in rng.permutation(len(groups))]
    queues = {sid: [groups[sid][i] for i in rng.permutation(len(groups[sid]))] for sid in order}
    picked: list[UtteranceRecord] = []
    while len(picked) < k and any(queues.values()):
        for sid in order:
            if queues[sid] and len(picked) < k:
                picked.append(queues[sid].pop(0))
    return picked


def build_main_eval_set(
    records: Sequence[UtteranceRecord],
    seed: int = 0,
    generator=None,
    max_per_tag: int = MAX_CLIPS_PER_TAG,
) -> list[EvalItem]:
    taxonomy = load_taxonomy()
    items = []
    for tag in taxonomy.names(richness="rich"):
        candidates = [r for r in records if tag in r.tags and r.tag_in_factor("gender")]
        if not candidates:
            continue
        rng = np.random.default_rng(derive_seed(seed, "main-eval-basics", tag))
        for r in pick_speaker_diverse(candidates, max_per_tag, derive_seed(seed, "main-eval", tag)):
            with_pitch, with_speed = rng.random(2) < OPTIONAL_BASIC_P
            chosen = [tag, r.tag_in_factor("gender")]
            pitch, speed = r.tag_in_factor("pitch-levels"), r.tag_in_factor("speed-levels")
            if with_pitch and pitch:
                chosen.append(pitch)
            if with_speed and speed:
                chosen.append(speed)
            chosen.append(CLEAR_TAG)
            rendered = render_prompt(chosen, generator)
            items.append(
                EvalItem(f"{tag}:{r.utterance_id}", r.utterance_id, tag, rendered.tags,
                         rendered.text, rendered.source, r.transcript)
            )
    return items


# --------------------------------------------------------------------------- compositional set


@dataclass(frozen=True)
class CompositionalItem:
    item_id: str
    intrinsic: str
    situational: str
    gender: str
    transcript: str
    prompt: str
    prompt_source: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def word_count(text: str) -> int:
    return len(text.split())


def build_compositional_eval_set(
    intrinsic: Sequence[str] = COMPOSITIONAL_INTRINSIC,
    situational: Sequence[str] = COMPOSITIONAL_SITUATIONAL,
    transcripts: Sequence[str] = (),
    seed: int = 0,
    genders: Sequence[str] = COMPOSITIONAL_GENDERS,
    generator=None,
) -> list[CompositionalItem]:
    """Cross every intrinsic tag with every situational tag and gender; one fresh transcript each."""
    taxonomy = load_taxonomy()
    for t in intrinsic:
        if not (s := taxonomy.lookup(t)).is_rich or not s.is_intrinsic:
            raise ValueError(f"{t!r} is not a rich intrinsic tag")
    for t in situational:
        if not (s := taxonomy.lookup(t)).is_rich or s.is_intrinsic:
            raise ValueError(f"{t!r} is not a rich situational tag")
    triples = [(i, s, g) for i in intrinsic for s in situational for g in genders]
    if len(set(triples)) != len(triples):
        raise ValueError("duplicate tags in compositional lists")

    pool = list(dict.fromkeys(t.strip() for t in transcripts if MIN_WORDS <= word_count(t) <= MAX_WORDS))
    if len(pool) < len(triples):
        raise InsufficientPoolError(f"need {len(triples)} transcripts of {MIN_WORDS}-{MAX_WORDS} words, have {len(pool)}")
    rng = np.random.default_rng(derive_seed(seed, "compositional"))
    picks = rng.choice(len(pool), size=len(triples), replace=False)
    items = []
    for (i, s, g), p in zip(triples, picks):
        rendered = render_prompt([g, i, s], generator)
        items.append(CompositionalItem(f"{i}+{s}+{g}", i, s, g, pool[p], rendered.text, rendered.source))
    return items


# --------------------------------------------------------------------------- training mixture


def mixture_component(r: UtteranceRecord) -> str:
    """Component name used for upsampling; scaled records with an emotion-style tag are 'scaled_situational'."""
    if r.source_dataset == "emilia":
        taxonomy = load_taxonomy()
        situational = any(
            (s := taxonomy.get(t)) and s.is_rich and not s.is_intrinsic for t in r.tags
        )
        return "scaled_situational" if situational else "scaled_intrinsic"
    return r.source_dataset


@dataclass(frozen=True)
class MixtureRow:
    component: str
    repeat: int
    record: UtteranceRecord

    def to_dict(self) -> dict:
        return {"component": self.component, "repeat": self.repeat, "record": self.record.to_dict()}


@dataclass
class Mixture:
    rows: list[MixtureRow]
    factors: dict[str, int]
    component_counts: dict[str, int]
    component_duration_s: dict[str, float]

    @property
    def total_duration_s(self) -> float:
        return math.fsum(self.factors[c] * d for c, d in self.component_duration_s.items())


def build_training_mixture(
    components: Mapping[str, Sequence[UtteranceRecord]],
    factors: Mapping[str, int] = UPSAMPLE_FACTORS,
) -> Mixture:
    """Repeat each component's records by its factor (1 when unlisted)."""
    rows: list[MixtureRow] = []
    used: dict[str, int] = {}
    counts: dict[str, int] = {}
    durations: dict[str, float] = {}
    for name in sorted(components):
        factor = int(factors.get(name, 1))
        if factor < 1:
            raise ValueError(f"{name}: upsample factor must be >= 1")
        recs = components[name]
        used[name] = factor
        counts[name] = len(recs)
        durations[name] = math.fsum(r.duration_s or 0.0 for r in recs)
        for rep in range(factor):
            rows.extend(MixtureRow(name, rep, r) for r in recs)
    return Mixture(rows, used, counts, durations)


def group_components(records: Sequence[UtteranceRecord]) -> dict[str, list[UtteranceRecord]]:
    out: dict[str, list[UtteranceRecord]] = {}
    for r in records:
        out.setdefault(mixture_component(r), []).append(r)
    return out


def sample_regularization_subset(
    records: Sequence[UtteranceRecord], hours: float, seed: int = 0
) -> list[UtteranceRecord]:
    """Seeded random subset whose total duration stays within ``hours``."""
    budget = hours * 3600.0
    picked, total = [], 0.0
    for r in _shuffled(sorted(records, key=lambda r: r.utterance_id), derive_seed(seed, "regularization")):
        d = r.duration_s or 0.0
        if total + d > budget:
            continue
        picked.append(r)
        total += d
    return sorted(picked, key=lambda r: r.utterance_id)
