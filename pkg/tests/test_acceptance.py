"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line (visible with ``pytest -s`` or in the
captured output of failures) followed by the individual checks.
"""

import pytest

from adiax import acceptance


def _run(number):
    res = acceptance.CRITERIA[f"criterion_{number}"]()
    print()
    print(res.line())
    for c in res.checks:
        print(f"    {'ok  ' if c.passed else 'FAIL'} {c.label}: {c.value:.6g} ({c.threshold})")
    return res


@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(number):
    res = _run(number)
    assert res.passed, res.line()
