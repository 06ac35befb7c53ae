"""Acceptance suite: one timed check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import random
import sys
import tempfile
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import (  # noqa: E402
    all_pairs_edges,
    best_sample_oracle,
    consensus_oracle,
    direction_oracle,
    edit_distance_recursive,
    expressive_oracle,
    sample_sd,
)
from stylecaps.annotate import AnnotationBundle, consensus_tags  # noqa: E402
from stylecaps.backends.base import DvaScore  # noqa: E402
from stylecaps.backends.mock import MockAudioRater, MockSpeakerEmbedder, MockTextEmbedder, Plants  # noqa: E402
from stylecaps.basic_tags import tag_noise_level, tag_pitch_level, tag_speed_level  # noqa: E402
from stylecaps.cli import main  # noqa: E402
from stylecaps.corpus import SpeakerRecord, UtteranceRecord  # noqa: E402
from stylecaps.evalkit import mos, normalized_wer, select_best_sample  # noqa: E402
from stylecaps.intrinsic_scale import compute_speaker_embedding, scale_intrinsic  # noqa: E402
from stylecaps.situational_scale import CascadeOptions, run_situational_cascade  # noqa: E402
from stylecaps.splits import (  # noqa: E402
    build_compositional_eval_set,
    build_splits,
    build_training_mixture,
    group_components,
    normalize_transcript,
)
from stylecaps.synthetic import WORDS  # noqa: E402
from stylecaps.taxonomy import CLARITY_TAGS, emotion_filter_spec, load_emotion_specs, load_taxonomy  # noqa: E402

RESULTS: dict[int, str] = {}


def _check(number: int, title: str, limit_s: float, fn) -> None:
    start = time.perf_counter()
    try:
        detail = fn()
        elapsed = time.perf_counter() - start
        assert elapsed < limit_s, f"took {elapsed:.2f}s, limit {limit_s}s"
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        RESULTS[number] = f"FAIL [{number:2d}] {title} ({elapsed:.2f}s): {exc}"
        print(RESULTS[number])
        raise
    RESULTS[number] = f"PASS [{number:2d}] {title} ({elapsed:.2f}s) {detail}"
    print(RESULTS[number])


def _rec(uid, speaker="s", source="voxceleb", **kw) -> UtteranceRecord:
    kw.setdefault("audio_ref", f"{source}/{uid}.wav")
    kw.setdefault("duration_s", 5.0)
    return UtteranceRecord(utterance_id=uid, speaker_id=speaker, source_dataset=source, **kw)


# 1 ---------------------------------------------------------------------------


def census():
    taxonomy = load_taxonomy()
    c = taxonomy.census()
    got = (c[("intrinsic", "rich")], c[("situational", "rich")], c[("intrinsic", "basic")], c[("situational", "basic")])
    assert got == (28, 23, 5, 3), got
    assert len(taxonomy.names()) == 59
    return "59 tags = 28/23/5/3"


# 2 ---------------------------------------------------------------------------

PITCH_CASES = [
    (115.69, "male", "low-pitched"), (115.7, "male", "medium-pitched"),
    (149.7, "male", "medium-pitched"), (149.71, "male", "high-pitched"),
    (141.59, "female", "low-pitched"), (141.6, "female", "medium-pitched"),
    (184.5, "female", "medium-pitched"), (184.51, "female", "high-pitched"),
]
SPEED_CASES = [(1149, 100.0, "slow"), (1150, 100.0, "measured"), (1910, 100.0, "measured"), (1911, 100.0, "fast")]
NOISE_CASES = [
    (-10.0, "very noisy"), (17.09, "very noisy"), (17.1, "very noisy"), (25.39, "very noisy"),
    (25.4, "quite noisy"), (33.69, "quite noisy"), (33.7, "slightly noisy"), (41.99, "slightly noisy"),
    (42.0, "balanced in clarity"), (50.19, "balanced in clarity"), (50.2, "slightly clean"),
    (58.49, "slightly clean"), (58.5, "quite clean"), (66.79, "quite clean"), (66.8, "very clean"),
    (74.99, "very clean"), (75.0, "very clean"), (200.0, "very clean"),
]


def thresholds():
    bad = [c for c in PITCH_CASES if tag_pitch_level(c[0], c[1]) != c[2]]
    bad += [c for c in SPEED_CASES if tag_speed_level(c[0], c[1]) != c[2]]
    bad += [c for c in NOISE_CASES if tag_noise_level(c[0]) != c[1]]
    assert not bad, bad
    return f"{len(PITCH_CASES) + len(SPEED_CASES) + len(NOISE_CASES)} boundary cases"


# 3 ---------------------------------------------------------------------------

GRID = (0.0, 0.2, 0.34, 0.35, 0.36, 0.5, 0.74, 0.75, 0.76, 1.0)


def dva_grid():
    triples = list(itertools.product(GRID, repeat=3))
    records = [_rec(f"g{i:04d}", source="emilia", transcript="x") for i in range(len(triples))]
    dva = {r.utterance_id: DvaScore(*t) for r, t in zip(records, triples)}
    emotions = sorted(load_emotion_specs())
    res = run_situational_cascade(
        records, emotions, dva, options=CascadeOptions(skip_semantic=True, skip_acoustic=True)
    )
    mismatches = 0
    for emotion in emotions:
        spec = emotion_filter_spec(emotion)
        kept = set(res.tagged[emotion])
        for r, (d, v, a) in zip(records, triples):
            want = expressive_oracle(d, v, a, 0.35, 0.75) and direction_oracle(
                d, v, a, spec.arousal_dominance_direction, spec.valence_direction, 0.35, 0.75
            )
            mismatches += want != (r.utterance_id in kept)
    assert mismatches == 0, f"{mismatches} mismatches"
    return f"{len(triples)} triples x {len(emotions)} emotions, 0 mismatches"


# 4 ---------------------------------------------------------------------------


def consensus():
    taxonomy = load_taxonomy()
    pool = [t.name for t in taxonomy.select(scope="intrinsic", richness="rich") if t.factor != "accent"]
    tags, fillers = pool[:6], pool[6:]
    n = 0
    for counts in itertools.product(range(6), repeat=6):
        sets = [set() for _ in range(5)]
        for t, c in zip(tags, counts):
            for i in range(c):
                sets[i].add(t)
        k = 0
        for s in sets:
            while len(s) < 3:
                s.add(fillers[k % len(fillers)])
                k += 1
        bundle = AnnotationBundle("s", tuple((f"a{i}", frozenset(s)) for i, s in enumerate(sets)))
        votes = Counter(t for s in sets for t in s)
        train_dev = consensus_tags(bundle, "train_dev")
        holdout = consensus_tags(bundle, "holdout")
        assert train_dev == consensus_oracle(votes, 2), counts
        assert holdout == consensus_oracle(votes, 3), counts
        assert train_dev & set(tags) == consensus_oracle(dict(zip(tags, counts)), 2), counts
        assert holdout <= train_dev
        n += 1
    return f"{n} agreement vectors"


# 5 ---------------------------------------------------------------------------


def propagation():
    rng = random.Random(5)
    clarity = sorted(CLARITY_TAGS)
    records, seeds, pool = [], [], []
    for k in range(200):
        sid = f"sp{k:03d}"
        cluster = k % 25
        if k % 9 == 4:
            voice = [[f"c{cluster}", 1.0], [f"c{(cluster + 1) % 25}", rng.choice([0.3, 0.6, 0.9])]]
        elif k % 11 == 5:
            voice = sid
        else:
            voice = f"c{cluster}"
        refs = tuple(f"{sid}/{j}.wav" for j in range(rng.randint(3, 12)))
        for ref in refs:
            records.append(_rec(ref, speaker=sid, audio_ref=ref, meta={"voice_seed": voice}))
        is_seed = k < 60
        tags = frozenset({"raspy", clarity[k % len(clarity)]}) if is_seed else frozenset()
        gender = ("male", "female")[cluster % 2] if is_seed else "unknown"
        sp = SpeakerRecord(sid, "voxceleb" if is_seed else "emilia", None, tags, gender, refs, refs,
                           tuple(5.0 for _ in refs))
        (seeds if is_seed else pool).append(sp)
    embedder = MockSpeakerEmbedder(Plants.from_records(records), seed=1)
    res = scale_intrinsic(seeds, pool, embedder, threshold=0.8, rng_seed=3)
    vec = {s.speaker_id: compute_speaker_embedding(s, embedder, 10, 3).vector for s in seeds + pool}
    want = all_pairs_edges(
        {s.speaker_id: vec[s.speaker_id].tolist() for s in seeds},
        {p.speaker_id: vec[p.speaker_id].tolist() for p in pool},
        0.8,
    )
    got = {(e.seed_id, e.target_id) for e in res.edges}
    assert got == want, (len(got), len(want), sorted(got ^ want)[:5])
    leaked = [s.speaker_id for s in res.speakers if s.intrinsic_tags & CLARITY_TAGS]
    assert not leaked, leaked
    tagged = sum(1 for s in res.speakers if s.intrinsic_tags)
    assert 0 < tagged < len(pool)
    return f"{len(got)} edges, {tagged}/{len(pool)} pool speakers tagged, no clarity tags"


# 6 ---------------------------------------------------------------------------

CASCADE_EMOTIONS = ("happy", "angry", "saddened", "calm", "awed")
LEVEL = {"high": 0.9, "low": 0.1, "none": 0.5}
FLIP = {"high": "low", "low": "high", "none": "none"}
KINDS = ("pass", "flat", "wrong_dir", "leak", "rating4", "garbled", "empty")


def _situational_corpus():
    rng = random.Random(6)
    specs = {e: emotion_filter_spec(e) for e in CASCADE_EMOTIONS}
    records = []
    for emotion, spec in specs.items():
        ad, val = spec.arousal_dominance_direction, spec.valence_direction
        for kind in KINDS:
            for copy in range(3):
                if kind == "flat":
                    d = v = a = 0.5
                elif kind == "wrong_dir":
                    d = a = LEVEL[FLIP[ad]]
                    v = LEVEL[FLIP[val]]
                else:
                    d = a = LEVEL[ad]
                    v = LEVEL[val]
                text = " ".join(rng.choice(WORDS) for _ in range(7))
                if kind == "leak":
                    text = f"{text} {spec.excluded_keywords[0]}"
                elif kind == "empty":
                    text = ""
                ratings = {}
                for other in CASCADE_EMOTIONS:
                    ratings[other] = rng.choice([5, 5, 3, "unsure, no score"])
                ratings[emotion] = {"rating4": 4, "garbled": "I cannot tell."}.get(kind, 5)
                records.append(_rec(f"{emotion}-{kind}-{copy}", speaker=emotion, source="emilia",
                                    transcript=text, meta={"dva": [d, v, a], "ratings": ratings}))
    return records


def _expected(records, emotion, skip_expr=False, skip_sem=False, skip_ac=False):
    spec = emotion_filter_spec(emotion)
    out = []
    for r in records:
        d, v, a = r.meta["dva"]
        ok_expr = expressive_oracle(d, v, a, 0.35, 0.75) and direction_oracle(
            d, v, a, spec.arousal_dominance_direction, spec.valence_direction, 0.35, 0.75)
        ok_sem = bool(r.transcript.strip()) and not any(k in r.transcript.lower() for k in spec.excluded_keywords)
        ok_ac = r.meta["ratings"].get(emotion, 1) == 5
        if (skip_expr or ok_expr) and (skip_sem or ok_sem) and (skip_ac or ok_ac):
            out.append(r.utterance_id)
    return sorted(out)


def situational():
    records = _situational_corpus()
    dva = {r.utterance_id: DvaScore(*r.meta["dva"]) for r in records}
    rater = MockAudioRater(Plants.from_records(records))
    checked = 0
    for flags in itertools.product((False, True), repeat=3):
        opts = CascadeOptions(skip_expressivity=flags[0], skip_semantic=flags[1], skip_acoustic=flags[2])
        res = run_situational_cascade(records, CASCADE_EMOTIONS, dva, MockTextEmbedder(), rater, opts)
        for emotion in CASCADE_EMOTIONS:
            want = _expected(records, emotion, *flags)
            assert res.tagged[emotion] == want, (flags, emotion, sorted(set(want) ^ set(res.tagged[emotion])))
            checked += 1
    # Among each emotion's own planted items only the "pass" kind survives the full cascade.
    base = run_situational_cascade(records, CASCADE_EMOTIONS, dva, MockTextEmbedder(), rater)
    for e in CASCADE_EMOTIONS:
        own = [u for u in base.tagged[e] if u.startswith(f"{e}-")]
        assert own == [f"{e}-pass-{i}" for i in range(3)], (e, own)
    return f"{checked} (flags, emotion) combinations exact"


# 7 ---------------------------------------------------------------------------


def _random_corpus(rng: random.Random):
    records = []
    n_text = rng.randint(20, 400)
    text = lambda: f"line {rng.randint(0, n_text)}"  # noqa: E731
    taxonomy = load_taxonomy()
    rich = [t.name for t in taxonomy.select(scope="intrinsic", richness="rich") if t.factor != "accent"][:8]
    for s in range(rng.randint(1, 60)):
        g = rng.choice(["male", "female"])
        tags = tuple(rng.sample(rich, rng.randint(1, 3))) + (g,)
        for j in range(rng.randint(1, 6)):
            records.append(_rec(f"v{s}-{j}", speaker=f"v{s}", tags=tags, transcript=text()))
    for j in range(rng.randint(0, 60)):
        records.append(_rec(f"x{j}", speaker=f"x{j % 4}", source="expresso", transcript=text()))
    for j in range(rng.randint(0, 40)):
        records.append(_rec(f"e{j}", speaker=f"e{j % 3}", source="ears", transcript=text(),
                            meta={"labelled": rng.random() < 0.7}))
    for j in range(rng.randint(0, 40)):
        records.append(_rec(f"m{j}", speaker=f"m{j % 5}", source="emilia", transcript=text()))
    return records


def _within_one(got: int, n: int, share: float) -> bool:
    return abs(got - share * n) <= 1


def split_integrity():
    rng = random.Random(7)
    trials = 120
    for trial in range(trials):
        records = _random_corpus(rng)
        res = build_splits(records, seed=trial, holdout_speakers=rng.randint(0, 12))
        text_split, spk_split = {}, {}
        for r in res.records:
            key = normalize_transcript(r.transcript)
            assert text_split.setdefault(key, r.split) == r.split, (trial, key)
            if r.source_dataset == "voxceleb":
                assert spk_split.setdefault(r.speaker_id, r.split) == r.split, (trial, r.speaker_id)
        vs = res.counts["voxceleb_speakers"]
        assert _within_one(vs["dev"], vs["dev"] + vs["train"], 0.1), (trial, vs)
        # Ratio policy is applied before de-duplication; counts[source] holds that tally.
        n_unlabelled = sum(1 for r in records if r.source_dataset == "ears" and not r.meta["labelled"])
        for source, extra_train in (("expresso", 0), ("ears", n_unlabelled)):
            c = dict(res.counts.get(source, {"train": 0, "dev": 0, "holdout": 0}))
            c["train"] -= extra_train
            n = sum(c.values())
            for split, share in (("train", 0.8), ("dev", 0.1), ("holdout", 0.1)):
                assert _within_one(c[split], n, share), (trial, source, c)
            survived = Counter(r.split for r in res.records if r.source_dataset == source)
            assert all(survived[k] <= res.counts[source][k] for k in survived)
        unlabelled = {r.utterance_id for r in records if r.source_dataset in ("ears", "emilia")
                      and not (r.source_dataset == "ears" and r.meta["labelled"])}
        assert all(r.split == "train" for r in res.records if r.utterance_id in unlabelled)
    return f"{trials} randomized corpora, 0 violations"


# 8 ---------------------------------------------------------------------------


def compositional():
    rng = random.Random(8)
    pool = list({" ".join(rng.choice(WORDS) for _ in range(rng.randint(6, 10))) for _ in range(600)})
    items = build_compositional_eval_set(transcripts=sorted(pool), seed=8)
    triples = {(i.intrinsic, i.situational, i.gender) for i in items}
    assert len(items) == 240 and len(triples) == 240
    assert len({i.transcript for i in items}) == 240
    return "240 unique (intrinsic, situational, gender) triples"


# 9 ---------------------------------------------------------------------------


def mixture():
    rng = random.Random(9)
    records = []
    for source, n in (("voxceleb", 17), ("expresso", 9), ("ears", 4), ("libritts", 23)):
        records += [_rec(f"{source}{i}", source=source, duration_s=rng.uniform(1, 10)) for i in range(n)]
    records += [_rec(f"es{i}", source="emilia", tags=("happy",)) for i in range(11)]
    records += [_rec(f"ei{i}", source="emilia", tags=("deep",)) for i in range(13)]
    m = build_training_mixture(group_components(records))
    rows = Counter(row.component for row in m.rows)
    want = {"voxceleb": 17 * 2, "expresso": 9 * 6, "ears": 4 * 6, "scaled_situational": 11 * 2,
            "libritts": 23, "scaled_intrinsic": 13}
    assert dict(rows) == want, dict(rows)
    assert m.factors["voxceleb"] == 2 and m.factors["expresso"] == 6
    assert m.factors["scaled_situational"] == 2 and m.factors["libritts"] == 1
    return ", ".join(f"{k}={v}" for k, v in sorted(want.items()))


# 10 --------------------------------------------------------------------------


def metrics():
    rng = random.Random(10)
    vocab = "a an the cat dog sat ran on mat hat".split()
    for _ in range(1000):
        ref = [rng.choice(vocab) for _ in range(rng.randint(1, 12))]
        hyp = [rng.choice(vocab) for _ in range(rng.randint(0, 12))]
        want = edit_distance_recursive(tuple(ref), tuple(hyp)) / len(ref)
        got = normalized_wer(" ".join(ref), " ".join(hyp))
        assert got == want, (ref, hyp, got, want)

    for scores, mean, half in (
        ([4, 4, 4, 4], 4.0, 0.0),
        ([1, 5], 3.0, 3.92),
        ([1, 2, 3, 4, 5], 3.0, 1.96 * math.sqrt(2.5) / math.sqrt(5)),
    ):
        m, h = mos(scores)
        assert abs(m - mean) < 1e-9 and abs(h - half) < 1e-9, (scores, m, h)
    for _ in range(200):
        xs = [rng.randint(1, 5) for _ in range(rng.randint(2, 30))]
        m, h = mos(xs)
        assert abs(h - 1.96 * sample_sd(xs) / math.sqrt(len(xs))) < 1e-9

    ref = "one two three four five six seven eight nine ten"
    words = ref.split()
    cases = 0
    for wers in itertools.product((0.0, 0.2, 0.5), repeat=3):
        pulled = []

        def lazy():
            for i, w in enumerate(wers):
                pulled.append(i)
                n = round(w * 10)
                yield (f"s{i}", " ".join(["x"] * n + words[n:]))
            pulled.append(3)
            yield ("s3", ref)

        choice = select_best_sample(lazy(), ref)
        assert (choice.index, choice.generated) == best_sample_oracle(list(wers), 0.20), wers
        assert len(pulled) == choice.generated
        cases += 1
    return f"1000 WER pairs, MOS to 1e-9, {cases} selection cases"


# 11 --------------------------------------------------------------------------


def _pipeline_digest(root: Path) -> dict[str, str]:
    inp, work = root / "in", root / "work"
    assert main(["make-synthetic", str(inp)]) == 0
    assert main(["run-pipeline", str(inp / "corpus.jsonl"), str(work), "--annotations",
                 str(inp / "annotations.jsonl"), "--config", str(inp / "config.yaml"), "--mock-backends"]) == 0
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(work.iterdir())}


def determinism():
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        first, second = _pipeline_digest(Path(a)), _pipeline_digest(Path(b))
    assert first == second, sorted(k for k in first if first[k] != second.get(k))
    audits = sum(1 for k in first if k.endswith(".audit.json"))
    return f"{len(first)} files byte-identical ({audits} audit logs)"


CRITERIA = [
    (1, "taxonomy census", 1.0, census),
    (2, "basic-tag threshold fidelity", 1.0, thresholds),
    (3, "expressivity/direction filter equivalence", 10.0, dva_grid),
    (4, "consensus rules", 10.0, consensus),
    (5, "intrinsic propagation golden", 30.0, propagation),
    (6, "situational cascade golden", 30.0, situational),
    (7, "split integrity", 60.0, split_integrity),
    (8, "compositional set size", 1.0, compositional),
    (9, "mixture arithmetic", 1.0, mixture),
    (10, "metric oracles", 30.0, metrics),
    (11, "end-to-end determinism", 120.0, determinism),
]


@pytest.mark.parametrize("number,title,limit,fn", CRITERIA, ids=[f"c{c[0]:02d}" for c in CRITERIA])
def test_criterion(number, title, limit, fn):
    _check(number, title, limit, fn)


if __name__ == "__main__":
    import logging

    logging.basicConfig(level=logging.ERROR)
    failed = 0
    for number, title, limit, fn in CRITERIA:
        try:
            _check(number, title, limit, fn)
        except BaseException:  # noqa: BLE001
            failed += 1
    sys.exit(1 if failed else 0)
