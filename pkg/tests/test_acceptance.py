"""Acceptance criteria, one test each, at the stated tolerances and runtime budgets.

Each test prints a PASS/FAIL line; the lines are repeated in the terminal
summary.  The full Brunn-Minkowski table is marked slow (about 10 minutes);
deselect it with ``-m "not slow"``.
"""
import json

import pytest

from bmeigen import suites
from bmeigen.io import to_jsonable


def _run(crit, acceptance_log, **kw):
    res = crit(**kw)
    line = res.line()
    print(line)
    acceptance_log.append(line)
    assert res.passed, f"{res.name} failed: {json.dumps(to_jsonable(res.measured))[:2000]}"
    return res


def test_operator_hypotheses(acceptance_log):
    _run(suites.criterion_operators, acceptance_log)


def test_eigenvalue_oracles(acceptance_log):
    _run(suites.criterion_eigen_oracles, acceptance_log)


def test_scaling_law(acceptance_log):
    _run(suites.criterion_scaling, acceptance_log)


def test_infimal_convolution(acceptance_log):
    _run(suites.criterion_infconv, acceptance_log)


def test_brunn_minkowski_smoke(acceptance_log):
    _run(suites.criterion_bm_smoke, acceptance_log)


@pytest.mark.slow
def test_brunn_minkowski_full_table(acceptance_log):
    res = _run(suites.criterion_bm, acceptance_log)
    assert len(res.measured["cells"]) == 6 * 2 * 3


def test_log_concavity(acceptance_log):
    _run(suites.criterion_log_concavity, acceptance_log)


def test_barrier_and_holder(acceptance_log):
    _run(suites.criterion_barrier_holder, acceptance_log)


def test_domain_approximation(acceptance_log):
    _run(suites.criterion_domain_approximation, acceptance_log)


def test_consistency_order(acceptance_log):
    _run(suites.criterion_consistency, acceptance_log)
