"""Acceptance criteria 1-8 at full scale (n = 1e5, h = 1e-3).

Each test prints one ``[PASS]``/``[FAIL]`` line.  Checks 1, 6 and 7 take a
few minutes each; the rest take seconds.
"""

import pytest

from ouconsume.verify import CHECKS, Context, VerifyConfig, run_check


@pytest.fixture(scope="module")
def ctx():
    return Context(VerifyConfig())


def _report(result, capsys):
    with capsys.disabled():
        print("\n" + result.line())
        if not result.passed:
            print(f"    measured: {result.measured}")


@pytest.mark.parametrize("number", [pytest.param(num, marks=pytest.mark.slow) if limit > 60 else num
                                    for num, _, limit, _ in CHECKS])
def test_criterion(number, ctx, capsys):
    result = run_check(number, ctx)
    _report(result, capsys)
    assert result.runtime_s <= result.runtime_limit_s
    assert result.passed, result.note


def test_barrier_report_documents_both_targets(ctx):
    # the discrepancy between targets is reported, not a failure
    from ouconsume.functionals import barrier_candidates

    c = barrier_candidates(ctx.cfg.params)
    assert c["sigma/b"].target != pytest.approx(c["printed"].target)
    assert c["sigma/b"].r_star != pytest.approx(c["printed"].r_star)
