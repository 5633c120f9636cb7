import numpy as np
import pytest

from turbtensor.data import Dataset, WindObservation


@pytest.fixture
def write_file(tmp_path):
    def _write(name, text):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


def make_dataset(n, seed=0, with_ri=True):
    rng = np.random.default_rng(seed)
    recs = []
    for t in range(n):
        h = float(rng.uniform(100, 3000))
        u, v, w = (float(x) for x in rng.normal(0, 5, size=3))
        ri = float(rng.lognormal(0, 1.5) * rng.choice([-1, 1])) if with_ri else None
        recs.append(WindObservation("S1", float(t * 60), h, u, v, w, ri))
    return Dataset(tuple(recs), ("generated",))


@pytest.fixture
def small_dataset():
    return make_dataset(60)


ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail=""):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}"
                            + (f" ({detail})" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
