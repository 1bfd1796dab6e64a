import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cheegerlab.scenarios import load_scenario

settings.register_profile(
    "lab", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("lab")


@functools.lru_cache(maxsize=None)
def scenario(name):
    return load_scenario(name)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def orthonormal(G, vecs):
    """Gram-Schmidt in the inner product G."""
    out = []
    for v in vecs:
        w = np.asarray(v, float).copy()
        for e in out:
            w = w - (e @ G @ w) * e
        out.append(w / np.sqrt(w @ G @ w))
    return out


ACCEPTANCE: dict = {}


def record_criterion(k, ok, detail):
    line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[k] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
