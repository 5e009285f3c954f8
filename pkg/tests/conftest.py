import numpy as np
import pytest
from hypothesis import settings

from mflab import summation

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

# criterion -> list of (sub-check, passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def record(criterion: str, check: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((check, bool(passed), detail))
    status = "PASS" if passed else "FAIL"
    print(f"[{status}] {criterion} / {check}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion, checks in ACCEPTANCE.items():
        ok = all(p for _, p, _ in checks)
        details = "; ".join(f"{c}: {d}" + ("" if p else " [FAILED]") for c, p, d in checks)
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {criterion}  ({details})")


@pytest.fixture(autouse=True)
def _single_thread():
    summation.set_num_threads(None)
    yield
    summation.set_num_threads(None)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
