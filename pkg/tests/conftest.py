from pathlib import Path

import pytest

from dto.priors import HeightPrior
from dto.solver import PersonObservation

FIXTURES = Path(__file__).parent / "fixtures"


def make_person(pid, h, z, d, mu, sigma, samples=None, **kw):
    return PersonObservation(pid, h, z, d, HeightPrior(mu, sigma),
                             samples if samples is not None else [], **kw)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def two_person_scene():
    """Priors centered on the initial heights; the exact fit is s=10, t=0."""
    return [
        make_person("a", 1.7, 4.0, 0.4, 1.70, 0.076),
        make_person("b", 1.6, 8.0, 0.8, 1.60, 0.071),
    ]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
