"""Shared test helpers plus the acceptance-summary terminal hook.

Acceptance tests register one line per criterion through record_criterion;
pytest prints them in a dedicated section at the end of the run so the
pass/fail verdicts survive output capture.
"""
import numpy as np
import pytest

_ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(num: int, passed: bool, detail: str) -> None:
    verdict = "PASS" if passed else "FAIL"
    _ACCEPTANCE_LINES[num] = f"criterion {num:2d} {verdict}  {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(_ACCEPTANCE_LINES[num])


def random_cloud(n: int, seed: int = 0, scale: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return scale * rng.standard_normal((n, 3))


def random_rotation(seed: int = 0) -> np.ndarray:
    """Uniform-ish random proper rotation via QR with sign fix."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_rigid(seed: int = 0):
    """(rotation, translation) pair for equivariance tests."""
    rng = np.random.default_rng(seed + 1)
    return random_rotation(seed), rng.uniform(-5.0, 5.0, 3)


def brute_knn(points: np.ndarray, q: np.ndarray, k: int) -> np.ndarray:
    """Reference k-nearest: sort by (distance, index), ties to lower index."""
    d = np.linalg.norm(points - q, axis=1)
    order = np.lexsort((np.arange(len(points)), d))
    return order[:k]


def brute_radius(points: np.ndarray, q: np.ndarray, r: float) -> np.ndarray:
    d = np.linalg.norm(points - q, axis=1)
    hits = np.flatnonzero(d <= r)
    return hits[np.lexsort((hits, d[hits]))]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
