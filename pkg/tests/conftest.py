import numpy as np
import pytest

from kernelforge.datasets import Dataset, FeatureManifest, save_dataset


def two_group_dataset(n=90, seed=0):
    """Imbalanced two-group set: group ``a`` carries a linear signal,
    group ``b`` a radial one."""
    rng = np.random.default_rng(seed)
    a = rng.random((n, 2))
    b = rng.random((n, 2))
    score = (a[:, 0] + a[:, 1] - 1.0) + 2.0 * (0.12 - ((b - 0.5) ** 2).sum(1))
    y = np.where(score + 0.15 * rng.normal(size=n) > 0.25, 1, -1)
    manifest = FeatureManifest((("a", 2), ("b", 2)))
    return Dataset(np.hstack([a, b]) * 10, y, manifest)


@pytest.fixture
def small_data():
    return two_group_dataset()


@pytest.fixture
def small_files(tmp_path):
    ds = two_group_dataset()
    data, manifest = tmp_path / "d.csv", tmp_path / "d.manifest.json"
    save_dataset(ds, data, manifest)
    return data, manifest


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line and fail the test if the check failed."""

    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        print(line)
        _CRITERIA.append(line)
        assert ok, line

    return record


def skip_criterion(name, reason):
    _CRITERIA.append(f"SKIP {name}: {reason}")
    pytest.skip(reason)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
