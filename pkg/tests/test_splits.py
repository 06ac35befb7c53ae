import random
from collections import Counter

import pytest

from conftest import rec
from oracles import feasible_holdout
from stylecaps.corpus import SpeakerRecord
from stylecaps.splits import (
    InsufficientPoolError,
    build_compositional_eval_set,
    build_main_eval_set,
    build_splits,
    build_training_mixture,
    dedupe_transcripts,
    group_components,
    mixture_component,
    normalize_transcript,
    pick_speaker_diverse,
    sample_regularization_subset,
    select_holdout_speakers,
)

TAGS = ["raspy", "deep", "husky"]


def _speakers(spec):
    return [SpeakerRecord(sid, "voxceleb", None, frozenset(t), g, (), (), ()) for sid, (g, t) in spec.items()]


def _covered(spec, chosen, demand):
    for t in {t for _, ts in spec.values() for t in ts}:
        for g in ("male", "female"):
            if sum(1 for s in chosen if spec[s][0] == g and t in spec[s][1]) < demand:
                return False
    return True


def test_planted_feasible_instance_fully_covered():
    spec = {}
    for i, t in enumerate(TAGS * 4):
        spec[f"s{i:02d}"] = (("male", "female")[i // 3 % 2], {t})
    spec["x"] = ("male", set())
    assert feasible_holdout(spec, TAGS, 2, 12)
    sel = select_holdout_speakers(_speakers(spec), {k: v[1] for k, v in spec.items()}, seed=1, cap=12)
    assert sel.deficits == {}
    assert _covered(spec, sel.speakers, 2) and "x" not in sel.speakers


def test_greedy_never_claims_infeasible_coverage():
    rng = random.Random(0)
    for trial in range(60):
        spec = {
            f"s{i}": (rng.choice(["male", "female"]), set(rng.sample(TAGS, rng.randint(0, 2))))
            for i in range(rng.randint(2, 8))
        }
        cap = rng.randint(1, 5)
        sel = select_holdout_speakers(_speakers(spec), {k: v[1] for k, v in spec.items()}, seed=trial, cap=cap)
        assert len(sel.speakers) <= cap
        if not sel.deficits:
            assert _covered(spec, sel.speakers, 2)
        tags = sorted({t for _, ts in spec.values() for t in ts})
        if not feasible_holdout(spec, tags, 2, cap):
            assert sel.deficits


def test_dedupe_priority_and_normalization():
    rs = [
        rec("h", transcript="Hello  World", split="holdout"),
        rec("t", transcript="hello world", split="train"),
        rec("d", transcript="HELLO world ", split="dev"),
        rec("d2", transcript="other", split="dev"),
    ]
    kept, dropped = dedupe_transcripts(rs)
    assert [r.utterance_id for r in kept] == ["t", "d2"] and dropped == ["h", "d"]
    assert normalize_transcript(" A\tb ") == "a b"


def test_single_voxceleb_speaker_goes_to_train():
    rs = [rec(f"u{i}", speaker="only", tags=("raspy", "male"), transcript=f"line {i}") for i in range(5)]
    out = build_splits(rs, seed=3)
    assert {r.split for r in out.records} == {"train"}


def _random_corpus(rng, n_speakers):
    rs = []
    for s in range(n_speakers):
        g = rng.choice(["male", "female"])
        tags = tuple(rng.sample(TAGS, 2)) + (g,)
        for j in range(rng.randint(1, 4)):
            rs.append(rec(f"v{s}-{j}", speaker=f"v{s}", tags=tags, transcript=f"t{rng.randint(0, 60)}"))
    for j in range(rng.randint(0, 25)):
        rs.append(rec(f"x{j}", speaker=f"x{j % 3}", source="expresso", transcript=f"t{rng.randint(0, 60)}"))
    for j in range(rng.randint(0, 12)):
        rs.append(rec(f"e{j}", speaker="e0", source="ears", transcript=f"t{rng.randint(0, 60)}",
                      meta={"labelled": j % 3 != 0}))
    return rs


def test_split_integrity_randomized():
    rng = random.Random(7)
    for trial in range(30):
        rs = _random_corpus(rng, rng.randint(1, 30))
        res = build_splits(rs, seed=trial, holdout_speakers=4)
        by_text = {}
        for r in res.records:
            key = normalize_transcript(r.transcript)
            assert by_text.setdefault(key, r.split) == r.split
        vox_splits = {}
        for r in res.records:
            if r.source_dataset == "voxceleb":
                assert vox_splits.setdefault(r.speaker_id, r.split) == r.split
        for r in res.records:
            if r.source_dataset == "ears" and r.meta["labelled"] is False:
                assert r.split == "train"
        n_expresso = sum(1 for r in rs if r.source_dataset == "expresso")
        c = res.counts.get("expresso")
        if c:
            assert abs(c["dev"] - 0.1 * n_expresso) <= 1 and abs(c["holdout"] - 0.1 * n_expresso) <= 1


def test_holdout_tags_tightened():
    rs = []
    for s in range(6):
        g = ("male", "female")[s % 2]
        rs += [rec(f"s{s}-{j}", speaker=f"s{s}", tags=("raspy", "deep", g), transcript=f"{s} {j}",
                   meta={"consensus_holdout": ["raspy"]}) for j in range(2)]
    res = build_splits(rs, seed=0, holdout_speakers=2)
    held = [r for r in res.records if r.split == "holdout"]
    assert held and all("deep" not in r.tags and "raspy" in r.tags for r in held)


def test_pick_speaker_diverse_cases():
    rs = [rec(f"a{i}", speaker="a") for i in range(3)] + [rec(f"b{i}", speaker="b") for i in range(2)] + \
         [rec(f"c{i}", speaker="c") for i in range(2)]
    picked = pick_speaker_diverse(rs, 5, seed=4)
    assert len(picked) == 5 and {r.speaker_id for r in picked} == {"a", "b", "c"}
    assert Counter(r.speaker_id for r in picked[:3]) == {"a": 1, "b": 1, "c": 1}
    assert len(pick_speaker_diverse(rs[:2], 5, seed=4)) == 2
    assert pick_speaker_diverse(rs, 5, seed=4) == picked


def test_main_eval_set_items():
    rs = [rec(f"u{i}", speaker=f"s{i % 3}", split="holdout",
              tags=("raspy", ("male", "female")[i % 2], "fast", "low-pitched")) for i in range(7)]
    rs.append(rec("nog", tags=("raspy",)))
    items = build_main_eval_set(rs, seed=1)
    assert len(items) == 5 and {i.rich_tag for i in items} == {"raspy"}
    assert all(i.tags[-1] == "clear" and "nog" not in i.item_id for i in items)
    assert build_main_eval_set(rs, seed=1) == items


def _pool(n, words=7):
    return [" ".join(f"w{i}x{k}" for k in range(words)) for i in range(n)]


def test_compositional_default_240_unique():
    items = build_compositional_eval_set(transcripts=_pool(240))
    assert len(items) == 240
    assert len({(i.intrinsic, i.situational, i.gender) for i in items}) == 240
    assert len({i.transcript for i in items}) == 240


def test_compositional_pool_filters():
    with pytest.raises(InsufficientPoolError):
        build_compositional_eval_set(transcripts=_pool(239))
    with pytest.raises(InsufficientPoolError):
        build_compositional_eval_set(transcripts=_pool(239) + ["too short five words here"])
    with pytest.raises(InsufficientPoolError):
        build_compositional_eval_set(transcripts=_pool(239) + [_pool(1)[0]])
    items = build_compositional_eval_set(transcripts=_pool(239) + ["a b c d e f g h i j"])
    assert len(items) == 240


def test_compositional_rejects_wrong_kinds():
    with pytest.raises(ValueError):
        build_compositional_eval_set(intrinsic=["angry"], situational=["happy"], transcripts=_pool(5))


def test_mixture_factors_and_duration():
    rs = (
        [rec(f"v{i}", source="voxceleb", duration_s=2.0) for i in range(3)]
        + [rec(f"x{i}", source="expresso", duration_s=1.0) for i in range(2)]
        + [rec("es", source="emilia", tags=("happy",), duration_s=4.0)]
        + [rec("ei", source="emilia", tags=("deep",), duration_s=4.0)]
    )
    assert mixture_component(rs[-2]) == "scaled_situational" and mixture_component(rs[-1]) == "scaled_intrinsic"
    m = build_training_mixture(group_components(rs))
    per = Counter(row.component for row in m.rows)
    assert per == {"voxceleb": 6, "expresso": 12, "scaled_situational": 2, "scaled_intrinsic": 1}
    assert m.total_duration_s == pytest.approx(2 * 6 + 6 * 2 + 2 * 4 + 4)
    with pytest.raises(ValueError):
        build_training_mixture({"a": rs}, {"a": 0})


def test_regularization_subset_budget():
    rs = [rec(f"r{i}", duration_s=600.0) for i in range(20)]
    sub = sample_regularization_subset(rs, 1.0, seed=2)
    assert len(sub) == 6 and sub == sample_regularization_subset(rs, 1.0, seed=2)
