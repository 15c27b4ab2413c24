import pytest

from prime_estate.dataset import cleanse, encode
from prime_estate.synth import SynthProfile, synthesize


@pytest.fixture(scope="session")
def default_listings():
    return synthesize(SynthProfile())


@pytest.fixture(scope="session")
def small_listings():
    return synthesize(SynthProfile().scaled(300))


@pytest.fixture(scope="session")
def small_matrix(small_listings):
    return encode(cleanse(small_listings))


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, title, ok, detail=""):
    """Remember a PASS/FAIL line for the acceptance summary and print it."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}" + (f" [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
