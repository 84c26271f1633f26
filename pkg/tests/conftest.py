import pytest

from syntha1c.experiments import synthetic_samples
from syntha1c.synthgen import GeneratorSpec


@pytest.fixture(scope="session")
def small_cohort():
    samples, ledger = synthetic_samples(GeneratorSpec(n_patients=60, n_samples=300, seed=3))
    return samples, ledger


_RESULTS = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion: ``with criterion(n, title, limit_s): ...``.

    The outcome (including a runtime-limit breach) is listed in the terminal
    summary as a single PASS/FAIL line.
    """
    import contextlib
    import time

    results = request.config.stash.setdefault(_RESULTS, [])

    @contextlib.contextmanager
    def run(number, title, limit_s):
        t0 = time.perf_counter()
        ok = False
        try:
            yield
            ok = True
        finally:
            elapsed = time.perf_counter() - t0
            within = elapsed < limit_s
            results.append((number, title, ok and within, elapsed, limit_s))
        assert within, f"criterion {number} took {elapsed:.2f}s, limit {limit_s}s"

    return run


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, elapsed, limit in sorted(results):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  #{number:<2} {title}  ({elapsed:.2f}s / {limit:g}s)")
