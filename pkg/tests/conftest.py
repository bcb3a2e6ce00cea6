"""Shared fixtures and the acceptance summary hook."""

import re
from importlib import resources
from pathlib import Path

import pytest

from memgrep.corpus import Corpus, Passage


def fixture_path(name: str) -> Path:
    return Path(resources.files("memgrep").joinpath("data", "fixture", name))


@pytest.fixture
def fixture_corpus_path() -> Path:
    return fixture_path("corpus.jsonl")


@pytest.fixture
def fixture_questions_path() -> Path:
    return fixture_path("questions.json")


def make_corpus(texts, session_id="s", speaker="A"):
    """Corpus of plain texts; ids are s:0, s:1, ..."""
    passages = tuple(
        Passage(
            id=f"{session_id}:{i}",
            session_id=session_id,
            turn_index=i,
            speaker=speaker,
            text=text,
        )
        for i, text in enumerate(texts)
    )
    return Corpus(passages=passages)


@pytest.fixture
def tiny_corpus():
    return make_corpus([
        "Melanie went hiking with Javier near Mount Rainier.",
        "Caroline baked sourdough for the farmers market.",
        "The weather was cold but the sunrise was worth it.",
    ])


# One line per acceptance criterion at the end of a run that touched them.
_CRITERION_TITLES = {
    1: "containment recall",
    2: "RRF brute-force equivalence",
    3: "RRF spot values",
    4: "truncation properties",
    5: "oracle optimality",
    6: "artifact determinism",
    7: "concurrency equivalence",
    8: "simulator/live agreement",
    9: "multi-hop expansion",
    10: "budget sweep trend (gated)",
    11: "ranking effect direction (gated)",
}

_results: dict[int, str] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and report.outcome != "skipped":
        return
    match = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not match:
        return
    num = int(match.group(1))
    if report.outcome == "passed":
        # A criterion may be split over several tests; any failure sticks.
        _results.setdefault(num, "PASS")
    elif report.outcome == "skipped":
        _results.setdefault(num, "SKIP")
    else:
        _results[num] = "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(_results):
        title = _CRITERION_TITLES.get(num, "")
        terminalreporter.write_line(f"criterion {num:>2} ({title}): {_results[num]}")
