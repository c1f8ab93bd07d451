import numpy as np
import pytest

from pepselect.data import Dataset, centre


def make_dataset(n=40, p=4, seed=0, coef=(0.8, 0.0, -0.5, 0.0), noise=1.0, names=None):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    b = np.zeros(p)
    b[: len(coef)] = coef[:p]
    y = 1.0 + X @ b + noise * rng.standard_normal(n)
    return Dataset(y, X, tuple(names) if names else ())


@pytest.fixture
def ds4():
    """n=40, p=4 with two real effects (X1, X3)."""
    return make_dataset()


@pytest.fixture
def ds4c(ds4):
    return centre(ds4)


@pytest.fixture
def ds3():
    return make_dataset(n=30, p=3, seed=7, coef=(0.7, 0.3, 0.0))


# acceptance report: each criterion test records one PASS/FAIL line, echoed in the summary
ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def _report(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        print(line)
        lines.append(line)
        assert ok, line
    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
