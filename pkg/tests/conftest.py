import numpy as np
import pytest

from lowrank_bayes.core import ObservationSet


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_obs(rng, m, p, n, scale=1.0):
    rows = rng.integers(0, m, n)
    cols = rng.integers(0, p, n)
    return ObservationSet(m, p, rows, cols, scale * rng.standard_normal(n))


# acceptance outcomes, printed once at the end of the session
ACCEPTANCE = {}
NOTES = []


def record_acceptance(number, name, passed, detail=""):
    ACCEPTANCE[number] = (name, bool(passed), detail)
    return bool(passed)


def record_note(text):
    NOTES.append(text)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE and not NOTES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number} {'PASS' if passed else 'FAIL'}: {name}; {detail}")
    for text in NOTES:
        terminalreporter.write_line(f"note: {text}")
