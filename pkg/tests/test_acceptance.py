"""Acceptance criteria at their stated tolerances, one PASS/FAIL line each.

Run under pytest (lines are collected into the terminal summary) or directly:
``python3 tests/test_acceptance.py``.
"""

import pytest

from geomgate import verify

LINES: list[str] = []


@pytest.mark.parametrize("check", verify.ACCEPTANCE, ids=lambda f: f.__name__.removeprefix("criterion_"))
def test_criterion(check):
    result = check()
    LINES.append(result.line())
    print(result.line())
    assert result.passed, result.detail


if __name__ == "__main__":
    for check in verify.ACCEPTANCE:
        print(check().line(), flush=True)
