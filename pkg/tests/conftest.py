from __future__ import annotations

from fractions import Fraction

import mpmath
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "sfl", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("sfl")


def to_fraction(x) -> Fraction:
    """Exact rational value of a BigReal (binary floats are dyadic rationals)."""
    sign, man, exp, _ = x._mpf
    if not man:
        return Fraction(0)
    value = Fraction(man) * (Fraction(2) ** exp)
    return -value if sign else value


@pytest.fixture
def mp256():
    with mpmath.workprec(256):
        yield mpmath.mp


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
