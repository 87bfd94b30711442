import numpy as np
import pytest

from generalbw.data import CLASSIFICATION, REGRESSION, FeatureSchema, ProjectTable


def make_table(X, y, effort=None, pid="p", task=CLASSIFICATION, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = names or tuple(f"x{i}" for i in range(X.shape[1]))
    schema = FeatureSchema(task, tuple(names), "y", "loc" if task == CLASSIFICATION else None)
    if effort is None and task == CLASSIFICATION:
        effort = np.ones(X.shape[0])
    return ProjectTable(pid, schema, X, np.asarray(y, dtype=float), effort)


def blob_table(n=120, F=4, seed=0, pid="p", pos_rate=0.3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, F))
    y = (X[:, 0] + 0.3 * rng.normal(size=n) > np.quantile(X[:, 0], 1 - pos_rate)).astype(float)
    return make_table(X, y, rng.integers(1, 200, n).astype(float), pid=pid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
