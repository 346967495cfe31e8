"""Shared fixtures and the acceptance-summary terminal hook."""

from __future__ import annotations

import datetime

import numpy as np
import pytest

from phraseqa.corpus import Corpus, Document, PhraseCandidate
from phraseqa.dense_index import PhraseEntry
from phraseqa.encoder import EMPTY_SPARSE

ACCEPTANCE_KEY = pytest.StashKey()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []
    config.addinivalue_line(
        "markers", "acceptance(name): marks a test as one acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    item.config.stash[ACCEPTANCE_KEY].append((name, report.passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE_KEY, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed in results:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}")


def make_doc(doc_id: str, abstract: str, **kw) -> Document:
    kw.setdefault("title", f"Title of {doc_id}")
    return Document(doc_id=doc_id, abstract=abstract, **kw)


@pytest.fixture(scope="session")
def tiny_corpus() -> Corpus:
    return Corpus(
        [
            make_doc(
                "d1",
                "The virus persists on steel for 72 hours. Copper surfaces show faster decay.",
                date=datetime.date(2020, 3, 17),
                venue="J Surf Sci",
                impact_factor=4.0,
                authors=("A. Author", "B. Writer"),
                url="https://example.org/d1",
            ),
            make_doc(
                "d2",
                "There is no cure for the disease and vaccine development takes 12-18 months. "
                "Heart disease raises patient risk.",
                date=datetime.date(2020, 2, 2),
            ),
            make_doc("d3", "Droplet transmission dominates indoors. Masks reduce spread."),
        ]
    )


def synthetic_entries(n: int, dim: int, seed: int) -> list[PhraseEntry]:
    """Random float32 entries with placeholder candidates, for pure index tests."""
    rng = np.random.default_rng(seed)
    vecs = rng.standard_normal((n, dim)).astype(np.float32)
    return [
        PhraseEntry(
            phrase_id=i,
            cand=PhraseCandidate(doc_id=f"s{i}", sent_index=0, token_span=(0, 1), char_span=(0, 1)),
            dense=vecs[i],
            sparse=EMPTY_SPARSE,
        )
        for i in range(n)
    ]
