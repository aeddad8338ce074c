"""The ten acceptance criteria at full size and tolerance, one pass/fail line each."""
import pytest

from adiabatic_sw import acceptance

from conftest import CRITERION_LINES


@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(number):
    r = acceptance.run_criterion(number, quick=False)
    print(r.line())
    CRITERION_LINES.append(r.line())
    assert r.passed, "; ".join(r.failures())
