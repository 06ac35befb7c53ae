import pytest

from stylecaps.taxonomy import (
    LEGACY_TAGS,
    NoEmotionSpecError,
    UnknownTagError,
    emotion_filter_spec,
    is_legacy_tag,
    load_emotion_specs,
    load_remap_table,
    load_taxonomy,
    lookup_tag,
    remap_source_label,
)


def test_census_counts():
    census = load_taxonomy().census()
    assert census == {
        ("intrinsic", "rich"): 28,
        ("situational", "rich"): 23,
        ("intrinsic", "basic"): 5,
        ("situational", "basic"): 3,
    }
    assert len(load_taxonomy()) == 59


def test_lookup_normalizes_and_rejects_unknown():
    assert lookup_tag("Vocal Fry").name == "vocal-fry"
    assert lookup_tag("vocal_fry").factor == "texture"
    with pytest.raises(UnknownTagError):
        lookup_tag("pitchy")


def test_factor_of_noise_labels():
    tax = load_taxonomy()
    assert tax.factor_of("slightly noisy") == "noise"
    assert tax.factor_of("clear") == "noise"
    assert tax.factor_of("raspy") == "texture"
    assert tax.factor_of("nonsense") is None


def test_sort_tags_dedupes_and_puts_noise_last():
    tax = load_taxonomy()
    assert tax.sort_tags(["very clean", "male", "deep", "deep", "angry"]) == ["deep", "male", "angry", "very clean"]


def test_remap_table_targets_in_vocabulary():
    tax = load_taxonomy()
    table = load_remap_table()
    for targets in table.entries.values():
        assert all(t in tax for t in targets)


@pytest.mark.parametrize(
    "label,expected",
    [
        ("happy", ["happy", "animated"]),
        ("whisper", ["whispered"]),
        ("desire", ["desirous", "animated"]),
        ("default", []),
        ("weak", []),
        ("slightly angry", []),
        ("very sad", ["saddened"]),
        ("sarcastic", ["sarcastic"]),
        ("totally-unknown", []),
    ],
)
def test_remap_source_label(label, expected):
    assert [t.name for t in remap_source_label(label)] == expected


def test_emotion_specs_cover_all_emotion_tags():
    tax = load_taxonomy()
    assert set(load_emotion_specs()) == set(tax.names(factor="emotion"))
    angry = emotion_filter_spec("angry")
    assert (angry.arousal_dominance_direction, angry.valence_direction) == ("high", "low")
    assert angry.matches_keyword("I was FRUSTRATED all day")
    with pytest.raises(NoEmotionSpecError):
        emotion_filter_spec("animated")


def test_legacy_tags_flagged_not_in_vocabulary():
    tax = load_taxonomy()
    for t in LEGACY_TAGS:
        assert is_legacy_tag(t.upper())
        assert t not in tax
