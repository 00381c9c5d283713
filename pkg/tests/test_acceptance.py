"""Acceptance suite: every criterion at its stated tolerance and time budget.

Each test prints one ``criterion N PASS/FAIL`` line; the lines are also
collected and repeated in the terminal summary.
"""

import pytest

from twosided import acceptance

RESULTS = []


@pytest.mark.parametrize("number", range(1, len(acceptance.CRITERIA) + 1))
def test_criterion(number):
    result = acceptance.CRITERIA[number - 1]()
    line = result.line()
    RESULTS.append(line)
    print(line)
    failed = [c for c in result.clauses if not c.passed]
    detail = "; ".join(f"{c.name} (value {c.value!r})" for c in failed)
    assert result.passed, f"{line}\n{detail}"
