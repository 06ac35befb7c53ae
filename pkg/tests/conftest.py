from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stylecaps.corpus import UtteranceRecord  # noqa: E402


def rec(uid: str, speaker: str = "s1", source: str = "voxceleb", **kw) -> UtteranceRecord:
    kw.setdefault("audio_ref", f"{source}/{uid}.wav")
    kw.setdefault("duration_s", 5.0)
    return UtteranceRecord(utterance_id=uid, speaker_id=speaker, source_dataset=source, **kw)


@pytest.fixture
def make_record():
    return rec


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
