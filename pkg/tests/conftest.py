import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from groupsleuth.corpus import Corpus, Review  # noqa: E402
from groupsleuth.represent import EmbeddingTable  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_review(rid, reviewer, item, rating, day, label=0, text="good food here"):
    import datetime as dt
    return Review(rid, reviewer, item, rating, dt.date(2020, 1, 1) + dt.timedelta(days=day), label, text)


@pytest.fixture
def toy_table():
    # two orthogonal topics plus a neutral word
    vocab = {"spam": 0, "scam": 1, "tasty": 2, "fresh": 3, "the": 4}
    vecs = np.array([[1, 0, 0], [0.9, 0.1, 0], [0, 1, 0], [0, 0.9, 0.1], [0, 0, 1]], dtype=np.float32)
    return EmbeddingTable(vocab, vecs)


@pytest.fixture
def toy_corpus():
    r = make_review
    return Corpus([
        r("r1", "a", "i1", 5, 0, 1, "spam scam. spam"),
        r("r2", "b", "i1", 5, 1, 1, "scam spam"),
        r("r3", "c", "i1", 5, 2, 0, "tasty fresh"),
        r("r4", "c", "i2", 2, 30, 0, "fresh tasty. the"),
        r("r5", "d", "i2", 2, 31, 0, "tasty"),
        r("r6", "a", "i3", 1, 60, 1, "spam"),
    ])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
