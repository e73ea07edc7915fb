import numpy as np
import pytest

from oromet.metric import MetricDataset, PointRecord


def line_dataset(positions, heights, labels=None):
    x = np.asarray(positions, dtype=float)
    return MetricDataset.from_matrix(heights, np.abs(x[:, None] - x[None, :]), labels=labels)


def synthetic_municipalities(n, seed, positive_rate=0.06):
    """Geodesic points in a Germany-sized box; labels favour large, isolated places."""
    rng = np.random.default_rng(seed)
    lat = rng.uniform(47.3, 55.0, n)
    lon = rng.uniform(6.0, 15.0, n)
    pop = np.round(np.exp(rng.normal(9.3, 0.9, n))) + 5001
    score = np.log(pop) + rng.normal(0, 0.6, n)
    labels = (score >= np.quantile(score, 1 - positive_rate)).astype(int)
    return [
        PointRecord(f"Q{1000 + i}", f"place {i}", float(pop[i]), (float(lat[i]), float(lon[i])), int(labels[i]))
        for i in range(n)
    ]


@pytest.fixture
def three_on_a_line():
    # positions 0, 1, 3 with heights 5, 3, 4
    return line_dataset([0, 1, 3], [5, 3, 4])


ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
