"""Speaker / utterance records and JSONL manifest I/O.

Manifest schema (one JSON object per line, UTF-8):

=================  ========  =========  =========================================
field              type      required   notes
=================  ========  =========  =========================================
schema_version     int       yes        currently 1
utterance_id       str       yes        unique within a manifest
speaker_id         str       yes
source_dataset     str       yes        lowercase (voxceleb, expresso, ears, ...)
audio_ref          str       yes        opaque path/URI, only backends read it
duration_s         float     no         null until known
transcript         str       no         default ""
snr_db             float     no
tags               [str]     no         vocabulary tags plus one noise label
split              str       no         train | dev | holdout | unassigned
provenance         {str:*}   no         processing flags (denoised, ...)
meta               {str:*}   no         free-form, includes planted mock values
=================  ========  =========  =========================================
"""

from __future__ import annotations

import json
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

from stylecaps.taxonomy import load_taxonomy

SCHEMA_VERSION = 1
SPLITS = ("train", "dev", "holdout", "unassigned")
SINGLE_VALUED_FACTORS = ("gender", "pitch-levels", "speed-levels", "noise")
MIN_SPEAKER_DURATION_S = 300.0


class ManifestError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DuplicateIdError(ManifestError):
    pass


@dataclass(frozen=True)
class UtteranceRecord:
    utterance_id: str
    speaker_id: str
    source_dataset: str
    audio_ref: str
    duration_s: float | None = None
    transcript: str = ""
    snr_db: float | None = None
    tags: tuple[str, ...] = ()
    split: str = "unassigned"
    provenance: dict[str, Any] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"invalid split {self.split!r}")
        object.__setattr__(self, "tags", tuple(self.tags))
        seen: dict[str, str] = {}
        taxonomy = load_taxonomy()
        for tag in self.tags:
            factor = taxonomy.factor_of(tag)
            if factor in SINGLE_VALUED_FACTORS:
                if factor in seen and seen[factor] != tag:
                    raise ValueError(
                        f"{self.utterance_id}: conflicting {factor} tags {seen[factor]!r}, {tag!r}"
                    )
                seen[factor] = tag

    def tag_in_factor(self, factor: str) -> str | None:
        taxonomy = load_taxonomy()
        for tag in self.tags:
            if taxonomy.factor_of(tag) == factor:
                return tag
        return None

    def with_tags(self, tags: Iterable[str]) -> "UtteranceRecord":
        return replace(self, tags=tuple(load_taxonomy().sort_tags(tags)))

    def add_tags(self, tags: Iterable[str]) -> "UtteranceRecord":
        """Union ``tags`` in; a new tag replaces any existing tag of the same single-valued factor."""
        taxonomy = load_taxonomy()
        new = list(tags)
        replaced = {taxonomy.factor_of(t) for t in new} & set(SINGLE_VALUED_FACTORS)
        kept = [t for t in self.tags if taxonomy.factor_of(t) not in replaced]
        return self.with_tags(kept + new)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "utterance_id": self.utterance_id,
            "speaker_id": self.speaker_id,
            "source_dataset": self.source_dataset,
            "audio_ref": self.audio_ref,
            "duration_s": self.duration_s,
            "transcript": self.transcript,
            "snr_db": self.snr_db,
            "tags": list(self.tags),
            "split": self.split,
            "provenance": self.provenance,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "UtteranceRecord":
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {version}")
        for key in ("utterance_id", "speaker_id", "source_dataset", "audio_ref"):
            if not isinstance(d.get(key), str) or not d[key]:
                raise ValueError(f"missing or invalid field {key!r}")
        duration = d.get("duration_s")
        snr = d.get("snr_db")
        return cls(
            utterance_id=d["utterance_id"],
            speaker_id=d["speaker_id"],
            source_dataset=d["source_dataset"],
            audio_ref=d["audio_ref"],
            duration_s=None if duration is None else float(duration),
            transcript=d.get("transcript") or "",
            snr_db=None if snr is None else float(snr),
            tags=tuple(d.get("tags") or ()),
            split=d.get("split", "unassigned"),
            provenance=dict(d.get("provenance") or {}),
            meta=dict(d.get("meta") or {}),
        )


@dataclass(frozen=True)
class SpeakerRecord:
    speaker_id: str
    source_dataset: str
    display_name: str | None = None
    intrinsic_tags: frozenset[str] = frozenset()
    gender_tag: str = "unknown"
    utterance_ids: tuple[str, ...] = ()
    audio_refs: tuple[str, ...] = ()
    clip_durations: tuple[float, ...] = ()

    def __post_init__(self):
        taxonomy = load_taxonomy()
        object.__setattr__(self, "intrinsic_tags", frozenset(self.intrinsic_tags))
        for tag in self.intrinsic_tags:
            t = taxonomy.lookup(tag)
            if not (t.is_intrinsic and t.is_rich):
                raise ValueError(f"{self.speaker_id}: {tag!r} is not a rich intrinsic tag")
        if self.gender_tag not in ("male", "female", "unknown"):
            raise ValueError(f"invalid gender tag {self.gender_tag!r}")

    @property
    def total_duration_s(self) -> float:
        return math.fsum(self.clip_durations)

    @property
    def below_min_duration(self) -> bool:
        return self.total_duration_s < MIN_SPEAKER_DURATION_S

    @property
    def tag_set(self) -> frozenset[str]:
        """Intrinsic tags plus the gender tag when known."""
        if self.gender_tag == "unknown":
            return self.intrinsic_tags
        return self.intrinsic_tags | {self.gender_tag}


@dataclass(frozen=True)
class StylePromptSet:
    utterance_id: str
    prompts: tuple[str, ...]
    prompt_tag_sets: tuple[tuple[str, ...], ...]
    sources: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.prompts) not in (1, 2):
            raise ValueError("a record carries one or two prompts")
        if len(self.prompts) != len(self.prompt_tag_sets):
            raise ValueError("each prompt needs its tag list")

    def to_dict(self) -> dict[str, Any]:
        return {
            "utterance_id": self.utterance_id,
            "prompts": list(self.prompts),
            "prompt_tag_sets": [list(t) for t in self.prompt_tag_sets],
            "sources": list(self.sources),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StylePromptSet":
        return cls(
            utterance_id=d["utterance_id"],
            prompts=tuple(d["prompts"]),
            prompt_tag_sets=tuple(tuple(t) for t in d["prompt_tag_sets"]),
            sources=tuple(d.get("sources") or ()),
        )


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"malformed JSON ({exc.msg})", lineno) from None
            if not isinstance(obj, dict):
                raise ManifestError("expected a JSON object", lineno)
            rows.append(obj)
    return rows


def dumps_line(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=False, allow_nan=False) + "\n"


def write_jsonl(rows: Iterable[dict[str, Any]], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(dumps_line(row))


def read_manifest(path: str | Path) -> list[UtteranceRecord]:
    records: list[UtteranceRecord] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("expected a JSON object")
                rec = UtteranceRecord.from_dict(obj)
            except (ValueError, TypeError) as exc:
                raise ManifestError(str(exc), lineno) from None
            if rec.utterance_id in seen:
                raise DuplicateIdError(
                    f"duplicate utterance_id {rec.utterance_id!r} (first on line {seen[rec.utterance_id]})",
                    lineno,
                )
            seen[rec.utterance_id] = lineno
            records.append(rec)
    return records


def write_manifest(records: Iterable[UtteranceRecord], path: str | Path) -> None:
    records = list(records)
    ids = [r.utterance_id for r in records]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise DuplicateIdError(f"duplicate utterance_id {dup!r}")
    write_jsonl((r.to_dict() for r in records), path)


def group_by_speaker(records: Sequence[UtteranceRecord]) -> list[SpeakerRecord]:
    """Partition utterances by speaker, in order of first appearance.

    Rich intrinsic tags are unioned over the speaker's utterances; the gender
    tag is the first one found.
    """
    taxonomy = load_taxonomy()
    groups: OrderedDict[str, list[UtteranceRecord]] = OrderedDict()
    for r in records:
        groups.setdefault(r.speaker_id, []).append(r)
    speakers = []
    for speaker_id, utts in groups.items():
        intrinsic: set[str] = set()
        gender = "unknown"
        for u in utts:
            for tag in u.tags:
                t = taxonomy.get(tag)
                if t is None:
                    continue
                if t.is_intrinsic and t.is_rich:
                    intrinsic.add(tag)
                elif t.factor == "gender" and gender == "unknown":
                    gender = tag
        first = utts[0]
        speakers.append(
            SpeakerRecord(
                speaker_id=speaker_id,
                source_dataset=first.source_dataset,
                display_name=first.meta.get("display_name"),
                intrinsic_tags=frozenset(intrinsic),
                gender_tag=gender,
                utterance_ids=tuple(u.utterance_id for u in utts),
                audio_refs=tuple(u.audio_ref for u in utts),
                clip_durations=tuple(u.duration_s or 0.0 for u in utts),
            )
        )
    return speakers


def apply_speaker_tags(
    records: Sequence[UtteranceRecord], speakers: Iterable[SpeakerRecord]
) -> list[UtteranceRecord]:
    """Push each speaker's intrinsic tags and gender onto its utterances."""
    by_id = {s.speaker_id: s for s in speakers}
    out = []
    for r in records:
        s = by_id.get(r.speaker_id)
        if s is None:
            out.append(r)
            continue
        out.append(r.add_tags(sorted(s.tag_set)))
    return out
