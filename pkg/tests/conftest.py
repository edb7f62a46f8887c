import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_hermitian(rng, n, complex_=True):
    A = rng.standard_normal((n, n))
    if complex_:
        A = A + 1j * rng.standard_normal((n, n))
    return 0.5 * (A + A.conj().T)


def random_spd(rng, n, complex_=True):
    A = rng.standard_normal((n, n))
    if complex_:
        A = A + 1j * rng.standard_normal((n, n))
    return A @ A.conj().T + n * np.eye(n)


# -- acceptance reporting -------------------------------------------------------

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def report():
    """Record ``(criterion, passed, detail)`` for the end-of-run summary."""

    def _report(number, passed, detail):
        ACCEPTANCE_RESULTS[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, 11):
        if number in ACCEPTANCE_RESULTS:
            ok, detail = ACCEPTANCE_RESULTS[number]
            terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        else:
            terminalreporter.write_line(f"criterion {number}: NOT RUN")
