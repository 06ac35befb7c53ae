import itertools
import logging

import pytest

from conftest import rec
from stylecaps.backends.base import BackendError
from stylecaps.backends.mock import MockPromptGenerator
from stylecaps.prompts import (
    NoTagsError,
    fallback_prompt,
    generate_prompt_sets,
    order_tags,
    plan_prompt_tag_sets,
    render_prompt,
)


def test_human_source_gets_situational_partial():
    r = rec("x", source="expresso", tags=("husky", "angry", "male", "measured"))
    assert plan_prompt_tag_sets(r) == [["male", "angry", "measured"], ["male", "husky", "angry", "measured"]]


def test_scaled_source_gets_intrinsic_partial():
    r = rec("x", source="emilia", tags=("deep", "happy", "female"))
    assert plan_prompt_tag_sets(r) == [["female", "deep"], ["female", "deep", "happy"]]


def test_single_kind_gives_one_list():
    r = rec("x", tags=("raspy", "male", "low-pitched", "very clean"))
    assert plan_prompt_tag_sets(r) == [["male", "raspy", "low-pitched", "very clean"]]


def test_empty_tags_raise():
    with pytest.raises(NoTagsError):
        plan_prompt_tag_sets(rec("x"))
    with pytest.raises(NoTagsError):
        fallback_prompt([])


def test_unknown_tag_skipped_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        assert order_tags(["bogus", "male"]) == ["male"]
    assert "bogus" in caplog.text


def test_fallback_forms():
    assert fallback_prompt(["raspy", "male", "fast"]) == "A male voice that is raspy, fast."
    assert fallback_prompt(["raspy"]) == "A voice that is raspy."
    assert fallback_prompt(["female"]) == "A female voice."


def test_fallback_injective_over_small_sets():
    pool = ["male", "female", "raspy", "deep", "angry", "happy", "fast", "very clean"]
    seen = {}
    for k in range(1, 4):
        for combo in itertools.combinations(pool, k):
            if {"male", "female"} <= set(combo):
                continue
            text = fallback_prompt(combo)
            assert seen.setdefault(text, frozenset(combo)) == frozenset(combo)
            assert fallback_prompt(list(reversed(combo))) == text


class Broken:
    def generate(self, request):
        raise BackendError("down")


class Empty:
    def generate(self, request):
        return "   "


@pytest.mark.parametrize("gen", [Broken(), Empty(), None])
def test_render_falls_back(gen):
    p = render_prompt(["male", "raspy"], gen)
    assert p.source == "fallback" and p.text == "A male voice that is raspy."


def test_render_backend_cleans_prefix():
    p = render_prompt(["raspy", "male"], MockPromptGenerator())
    assert p.source == "backend"
    assert p.text == "Speech described as male, raspy."


def test_generate_sets_parallel_matches_serial():
    records = [
        rec(f"u{i}", source=src, tags=tags)
        for i, (src, tags) in enumerate(
            [("expresso", ("husky", "angry", "male")), ("emilia", ("deep", "happy")), ("voxceleb", ("female",))] * 4
        )
    ]
    serial = generate_prompt_sets(records, MockPromptGenerator())
    parallel = generate_prompt_sets(records, MockPromptGenerator(), max_in_flight=4)
    assert serial == parallel
    assert [len(s.prompts) for s in serial[:3]] == [2, 2, 1]
