"""Seeded synthetic corpus with planted backend values, for mock runs and golden tests.

Everything a mock backend needs is planted in ``meta`` (see
:mod:`stylecaps.backends.mock`). The corpus deliberately contains items each
stage should drop: out-of-range clips, a non-English VoxCeleb clip that pushes
its speaker under the clip minimum, short-total scaled speakers, duplicate
transcripts across sources and keyword-leaking transcripts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from stylecaps.corpus import UtteranceRecord
from stylecaps.seeding import derive_seed
from stylecaps.taxonomy import load_emotion_specs, load_taxonomy, remap_source_label

_RAW_WORDS = (
    "river table window morning garden paper music station market yellow green simple little "
    "ready north south letter bridge silver forest coffee summer winter doctor island planet "
    "pencil rabbit ticket travel village bottle button candle circle dinner engine family finger "
    "flower guitar hammer jacket kitten ladder lemon magnet number ocean pocket basket blanket "
    "butter carpet cotton copper harbor helmet kettle lantern meadow mirror noodle parcel pepper "
    "pillow ribbon saddle shadow sister timber tunnel velvet wallet walnut weather wizard"
).split()

EXPRESSO_LABELS = ("happy", "sad", "angry", "whisper", "default", "confused", "laughing", "bored")
EARS_LABELS = ("amusement", "fear", "pain", "sadness", "adoration", "disgust", "serenity")
LEAK_LINES = {
    "happy": "i am so happy about the garden this morning",
    "angry": "the rage in that room was hard to miss today",
    "saddened": "it was a sad little letter from my sister",
}
GENDERS = ("male", "female")


def _clean_words() -> tuple[str, ...]:
    keywords = [k for spec in load_emotion_specs().values() for k in spec.excluded_keywords]
    return tuple(w for w in _RAW_WORDS if not any(k in w for k in keywords))


WORDS = _clean_words()


@dataclass
class SyntheticCorpus:
    records: list[UtteranceRecord]
    annotations: list[dict]
    emotions: tuple[str, ...]


class _Gen:
    def __init__(self, seed: int):
        self.rng = np.random.default_rng(derive_seed(seed, "synthetic"))
        self.used: set[str] = set()

    def sentence(self, lo: int = 6, hi: int = 10) -> str:
        while True:
            n = int(self.rng.integers(lo, hi + 1))
            text = " ".join(self.rng.choice(WORDS, size=n))
            if text not in self.used:
                self.used.add(text)
                return text

    def pitch(self, gender: str) -> float:
        centre = 132.0 if gender == "male" else 163.0
        return round(float(self.rng.normal(centre, 22.0)), 1)

    def dva(self) -> list[float]:
        return [round(float(x), 3) for x in self.rng.uniform(0.0, 1.0, size=3)]


def make_synthetic_corpus(
    seed: int = 0,
    n_voxceleb: int = 24,
    n_expresso_speakers: int = 4,
    n_ears_speakers: int = 3,
    n_emilia: int = 30,
    emotions: Sequence[str] = ("happy", "angry", "saddened", "calm", "awed", "confused"),
) -> SyntheticCorpus:
    g = _Gen(seed)
    rng = g.rng
    taxonomy = load_taxonomy()
    annotatable = [t.name for t in taxonomy.select(scope="intrinsic", richness="rich") if t.factor != "accent"]
    accents = taxonomy.names(factor="accent")
    records: list[UtteranceRecord] = []
    annotations: list[dict] = []
    vox_transcripts: list[str] = []

    for i in range(n_voxceleb):
        sid = f"vox{i:03d}"
        gender = GENDERS[i % 2]
        n_clips = 10 if i == 0 else int(rng.integers(11, 14))
        accent_meta = {"accent": accents[i % len(accents)]} if i % 3 else {"llm_accent": accents[(i + 1) % len(accents)]}
        for j in range(n_clips):
            transcript = g.sentence()
            meta = {
                "voice_seed": sid,
                "gender": gender,
                "speaker_gender": gender,
                "pitch_hz": g.pitch(gender),
                "display_name": f"Speaker {i}",
                **accent_meta,
            }
            if i == 0 and j == 0:
                transcript = "bonjour tout le monde nous parlons ici ce matin"
                meta["language"] = "fr"
            if j == 1:
                meta["asr_text"], transcript = transcript, ""
            else:
                vox_transcripts.append(transcript)
            records.append(
                UtteranceRecord(
                    utterance_id=f"{sid}-{j:02d}",
                    speaker_id=sid,
                    source_dataset="voxceleb",
                    audio_ref=f"voxceleb/{sid}/{j:02d}.wav",
                    duration_s=round(float(rng.uniform(3.0, 9.0)), 2),
                    transcript=transcript,
                    snr_db=round(float(rng.uniform(15.0, 80.0)), 1),
                    meta=meta,
                )
            )
        true_tags = set(rng.choice(annotatable, size=3, replace=False).tolist())
        for a in range(5):
            picked = {t for t in sorted(true_tags) if rng.random() < 0.8}
            extras = rng.choice(annotatable, size=int(rng.integers(1, 3)), replace=False).tolist()
            picked.update(extras)
            while len(picked) < 3:
                picked.add(str(rng.choice(annotatable)))
            annotations.append({"speaker_id": sid, "annotator_id": f"ann{a}", "tags": sorted(picked)})

    def labelled_source(source: str, n_speakers: int, per_speaker: int, labels, labelled_share: float | None):
        for i in range(n_speakers):
            sid = f"{source[:2]}{i:02d}"
            gender = GENDERS[(i + 1) % 2]
            for j in range(per_speaker):
                label = labels[int(rng.integers(len(labels)))]
                tags = [t.name for t in remap_source_label(label)]
                if j == 0 and source == "expresso":
                    transcript = vox_transcripts[-1 - i]  # shared with VoxCeleb: exercises de-duplication
                else:
                    transcript = g.sentence()
                meta = {"speaker_gender": gender, "pitch_hz": g.pitch(gender), "source_label": label}
                if labelled_share is not None:
                    meta["labelled"] = bool(j < per_speaker * labelled_share)
                records.append(
                    UtteranceRecord(
                        utterance_id=f"{sid}-{j:02d}",
                        speaker_id=sid,
                        source_dataset=source,
                        audio_ref=f"{source}/{sid}/{j:02d}.wav",
                        duration_s=round(float(rng.uniform(2.5, 12.0)), 2),
                        transcript=transcript,
                        snr_db=round(float(rng.uniform(40.0, 85.0)), 1),
                        tags=tuple(tags),
                        meta=meta,
                    )
                )

    labelled_source("expresso", n_expresso_speakers, 12, EXPRESSO_LABELS, None)
    labelled_source("ears", n_ears_speakers, 10, EARS_LABELS, 0.6)

    vox_ids = [f"vox{i:03d}" for i in range(1, n_voxceleb)]
    leak_cycle = list(LEAK_LINES.values())
    for i in range(n_emilia):
        sid = f"em{i:03d}"
        if i < 10:
            voice = vox_ids[i % len(vox_ids)]
        elif i < 15:
            voice = [[vox_ids[i % len(vox_ids)], 1.0], [sid, 1.0]]
        else:
            voice = sid
        gender = GENDERS[int(vox_ids[i % len(vox_ids)][3:]) % 2] if i < 15 else GENDERS[i % 2]
        n_clips = 5 if i in (n_emilia - 1, n_emilia - 2) else 12
        for j in range(n_clips):
            if j == 0 and i < len(leak_cycle):
                transcript = leak_cycle[i]
            else:
                transcript = g.sentence()
            if j == n_clips - 1 and i % 7 == 3:
                duration = 1.5
            elif j == n_clips - 2 and i % 7 == 3:
                duration = 31.0
            else:
                duration = round(float(rng.uniform(25.5, 29.5)), 2)
            rated = rng.choice(list(emotions), size=int(rng.integers(1, 4)), replace=False).tolist()
            ratings: dict = {e: (5 if rng.random() < 0.5 else int(rng.integers(2, 5))) for e in rated}
            if j == 2 and i % 5 == 0:
                ratings[rated[0]] = "I could not decide on a score for this clip."
            records.append(
                UtteranceRecord(
                    utterance_id=f"{sid}-{j:02d}",
                    speaker_id=sid,
                    source_dataset="emilia",
                    audio_ref=f"emilia/{sid}/{j:02d}.wav",
                    duration_s=duration,
                    transcript=transcript,
                    meta={
                        "voice_seed": voice,
                        "gender": gender,
                        "pitch_hz": g.pitch(gender),
                        "snr_db": round(float(rng.uniform(10.0, 80.0)), 1),
                        "dva": g.dva(),
                        "ratings": ratings,
                    },
                )
            )
    return SyntheticCorpus(records, annotations, tuple(emotions))


def make_synthetic_responses(item_ids_and_tags: Sequence[tuple[str, str]], seed: int = 0, raters: int = 3) -> list[dict]:
    """Rater rows for ``(item_id, tag)`` pairs: a heard/not-heard vote and a Likert score each."""
    rng = np.random.default_rng(derive_seed(seed, "responses"))
    rows = []
    for item_id, tag in item_ids_and_tags:
        for k in range(raters):
            rows.append(
                {
                    "item_id": item_id,
                    "rater_id": f"r{k}",
                    "tag": tag,
                    "tag_heard": bool(rng.random() < 0.7),
                    "likert": int(rng.integers(2, 6)),
                }
            )
    return rows


def make_compositional_responses(item_ids: Sequence[str], seed: int = 0, raters: int = 3) -> list[dict]:
    rng = np.random.default_rng(derive_seed(seed, "compositional-responses"))
    options = (["intrinsic", "situational"], ["intrinsic"], ["situational"], [])
    rows = []
    for item_id in item_ids:
        for k in range(raters):
            rows.append(
                {
                    "item_id": item_id,
                    "rater_id": f"r{k}",
                    "tags_heard_compositional": options[int(rng.choice(4, p=[0.5, 0.2, 0.2, 0.1]))],
                    "likert": int(rng.integers(2, 6)),
                }
            )
    return rows
