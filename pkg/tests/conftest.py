import numpy as np
import pytest

from nameorigin.codec import NameEncoder
from nameorigin.synthetic import synthetic_names


@pytest.fixture(scope="session")
def tiny_corpus():
    """250 synthetic names over 4 origins: first 200 for training, last 50 held out."""
    names, labels, origins = synthetic_names(250, seed=1)
    X = NameEncoder().fit_transform(names)
    return {
        "names": names,
        "X": X,
        "y": labels,
        "origins": origins,
        "train": (X[:200], labels[:200]),
        "test": (X[200:], labels[200:]),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record a ``PASS``/``FAIL`` line for one acceptance criterion."""
    def record(number, title, passed, detail=""):
        _ACCEPTANCE[number] = f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}" + (f"  ({detail})" if detail else "")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
