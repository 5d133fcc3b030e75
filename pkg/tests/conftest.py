import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vntpp import autodiff as ad
from vntpp.data import Dataset, EventSequence

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _fail_fast_nan():
    """Non-finite tensors raise immediately inside tests."""
    with ad.check_finite(True):
        yield
    ad.current_tape().clear()


def seq(times, types=None, horizon=None):
    times = list(times)
    types = [0] * len(times) if types is None else list(types)
    return EventSequence(types, times, horizon)


def toy_dataset(n=12, K=3, seed=0, name="toy"):
    rng = np.random.default_rng(seed)
    seqs = []
    for _ in range(n):
        L = int(rng.integers(2, 9))
        times = np.cumsum(rng.exponential(0.7, L))
        seqs.append(EventSequence(rng.integers(0, K, L), times, float(times[-1] + 0.5)))
    return Dataset(tuple(seqs), K, name)


# ---------------------------------------------------------------- acceptance
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Remember one acceptance line; printed in the terminal summary even when output is captured."""
    ACCEPTANCE[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
