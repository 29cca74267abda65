import time
from contextlib import contextmanager

import numpy as np
import pytest

from interpmor.lti import DescriptorSystem


def random_stable(n, m=1, p=1, seed=0, margin=0.5, descriptor=False):
    """Random stable system; poles shifted left of ``-margin``."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + margin) * np.eye(n)
    E = None
    if descriptor:
        E = np.eye(n) + 0.1 * rng.standard_normal((n, n))
        A = E @ A
    return DescriptorSystem(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)), None, E)


def symmetric_stable(n, m=1, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n))
    A = -(X @ X.T + n * np.eye(n)) / n
    X = rng.standard_normal((n, n))
    E = X @ X.T / n + np.eye(n)
    B = rng.standard_normal((n, m))
    return DescriptorSystem(A, B, B.T, None, E)


def index1(n=8, rank=5, m=2, p=2, seed=0):
    """Index-one pencil: random orthogonal frames around a rank-deficient E."""
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Vt, _ = np.linalg.qr(rng.standard_normal((n, n)))
    E = U @ np.diag(np.r_[rng.uniform(1, 2, rank), np.zeros(n - rank)]) @ Vt
    X = rng.standard_normal((n, n))
    A = -(X @ X.T + n * np.eye(n)) / n
    return DescriptorSystem(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)), None, E)


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    nb = np.linalg.norm(b)
    return np.linalg.norm(a - b) / (nb if nb else 1.0)


@pytest.fixture
def example3():
    """The 3 x 3, two-input two-output worked example."""
    A = [[-6, -11, -6], [1, 0, 0], [0, 1, 0]]
    B = [[-1, 1], [0, 1], [1, 0]]
    C = [[1, 0, 1], [1, -1, 0]]
    return DescriptorSystem(A, B, C)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ---------------------------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Context manager timing one acceptance criterion and recording PASS or FAIL."""
    @contextmanager
    def run(number, title, limit):
        t0 = time.perf_counter()
        detail = ""
        try:
            yield
            elapsed = time.perf_counter() - t0
            if elapsed >= limit:
                detail = f"runtime {elapsed:.2f} s, limit {limit:g} s"
                raise AssertionError(detail)
        except BaseException as exc:
            detail = detail or (str(exc).strip().splitlines() or [type(exc).__name__])[0]
            ACCEPTANCE[number] = (title, "FAIL", time.perf_counter() - t0, detail)
            raise
        ACCEPTANCE[number] = (title, "PASS", elapsed, f"limit {limit:g} s")
    return run


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        title, status, elapsed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {status}  {title}  ({elapsed:.2f} s; {detail})")
