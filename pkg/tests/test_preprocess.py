import pytest

from conftest import rec
from stylecaps.backends import mock_registry
from stylecaps.preprocess import (
    MissingDurationError,
    filter_duration,
    filter_min_clip_count,
    filter_min_speaker_duration,
    preprocess,
)


def test_duration_bounds_inclusive():
    rs = [rec(str(d), duration_s=d) for d in (1.99, 2.0, 15.0, 30.0, 30.01)]
    assert [r.duration_s for r in filter_duration(rs)] == [2.0, 15.0, 30.0]
    with pytest.raises(MissingDurationError):
        filter_duration([rec("x", duration_s=None)])


def test_speaker_total_boundary():
    rs = [rec(f"a{i}", speaker="a", duration_s=30.0) for i in range(10)]
    rs += [rec(f"b{i}", speaker="b", duration_s=29.9) for i in range(10)]
    kept = filter_min_speaker_duration(rs, 300.0)
    assert {r.speaker_id for r in kept} == {"a"}


def test_clip_count_only_for_voxceleb():
    rs = [rec(f"v{i}", speaker="v") for i in range(9)] + [rec(f"e{i}", speaker="e", source="expresso") for i in range(2)]
    kept = filter_min_clip_count(rs, 10)
    assert {r.speaker_id for r in kept} == {"e"}


def test_preprocess_chain_and_provenance():
    rs = [rec(f"v{i:02d}", speaker="v", transcript="hello there friend") for i in range(10)]
    rs.append(rec("v10", speaker="v", transcript="", meta={"asr_text": "filled by asr"}))
    rs.append(rec("fr", speaker="v", transcript="bonjour a tous", meta={"language": "fr"}))
    rs.append(rec("short", speaker="v", duration_s=1.0, transcript="x"))
    rs.append(rec("em1", speaker="em", source="emilia", duration_s=20.0, transcript="some words"))
    reg = mock_registry(rs)
    out, counts = preprocess(rs, reg.language_identifier, reg.asr_transcriber)
    ids = [r.utterance_id for r in out]
    assert "short" not in ids and "fr" not in ids and "em1" not in ids
    assert "v10" in ids
    filled = next(r for r in out if r.utterance_id == "v10")
    assert filled.transcript == "filled by asr" and filled.provenance["transcript"] == "asr"
    assert all(r.provenance["denoise"] == "pending" for r in out)
    assert counts == {"in": 14, "after_duration": 13, "after_language": 12, "after_clip_count": 12,
                      "after_speaker_total": 11, "out": 11}
