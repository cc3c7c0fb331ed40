"""Verification gate: one test per release criterion.

Each test prints its measured numbers on a pass/fail line, so running
``pytest tests/test_acceptance.py -s`` doubles as the verification report.
Long scenarios are shared across criteria through a session-scoped
workspace (the same artifacts the ``midpop check`` subcommand writes).
"""

import pytest

from midpop import acceptance


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    return acceptance._Workspace(tmp_path_factory.mktemp("acceptance"))


def _report(result):
    print(result.line())
    assert result.passed, result.line()


def test_criterion_01_midpoint_conservation(workspace):
    _report(acceptance.criterion_1(workspace))


def test_criterion_02_moment_map_oracle(workspace):
    _report(acceptance.criterion_2(workspace))


def test_criterion_03_constant_selection_baseline(workspace):
    _report(acceptance.criterion_3(workspace))


def test_criterion_04_limit_profile_stationarity(workspace):
    _report(acceptance.criterion_4(workspace))


def test_criterion_05_spectral_convergence_rate(workspace):
    _report(acceptance.criterion_5(workspace))


def test_criterion_06_concentration_stability(workspace):
    _report(acceptance.criterion_6(workspace))


def test_criterion_07_improved_rates(workspace):
    _report(acceptance.criterion_7(workspace))


def test_criterion_08_remainder_domination(workspace):
    _report(acceptance.criterion_8(workspace))


def test_criterion_09_cross_solver_consistency(workspace):
    _report(acceptance.criterion_9(workspace))


def test_criterion_10_restart_bitwise(workspace):
    _report(acceptance.criterion_10(workspace))
