"""Acceptance criteria 1-10 at their stated tolerances and runtime budgets.

Each test prints one ``criterion N PASS|FAIL`` line; details follow it.
"""
import pytest

from levyspde.acceptance import CRITERIA, run_criterion


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    result = run_criterion(number)
    with capsys.disabled():
        print()
        print(result.line())
        for line in result.details:
            print(f"    {line}")
    assert result.passed, "\n".join([result.line(), *result.details])


def test_single_path_rejected():
    with pytest.raises(ValueError):
        run_criterion(3, paths=1)


def test_unknown_criterion():
    with pytest.raises(KeyError):
        run_criterion(11)
