import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def verdict(request):
    """``verdict(number, title, checks)`` records one PASS/FAIL line and asserts every check.

    ``checks`` is a list of ``(label, ok, detail)`` triples.
    """
    lines = request.config.stash[_ACCEPTANCE]

    def record(number: int, title: str, checks: list) -> None:
        ok = all(c[1] for c in checks)
        failed = [c for c in checks if not c[1]]
        shown = failed if failed else checks
        detail = "; ".join(f"{label}: {d}" for label, _, d in shown)
        lines.append((number, f"{'PASS' if ok else 'FAIL'} criterion {number:>2} {title} | {detail}"))
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
