import math

import pytest

from ouconsume.model import EXAMPLE, ModelParams, ParameterError, State, derive_params, unchecked_params


def test_example_derived_quantities():
    p = EXAMPLE
    assert p.b == pytest.approx(2.0)
    assert p.sigma == pytest.approx(math.sqrt(2.0))
    assert p.sigma / p.b == pytest.approx(math.sqrt(2.0) / 2)
    assert p.q_mean == pytest.approx(0.0)
    assert p.order == pytest.approx(2.0)


@pytest.mark.parametrize(
    "kw, constraint",
    [
        (dict(a=0.0), "a"),
        (dict(a=-1.0), "a"),
        (dict(sigma_tilde=0.0), "sigma_tilde"),
        (dict(mu=0.0), "mu"),
        (dict(b_tilde=2.0), "b_tilde"),  # equals sigma_tilde^2/(2a^2)
        (dict(b_tilde=float("nan")), "b_tilde"),
        (dict(a=float("inf")), "a"),
    ],
)
def test_rejects_bad_params(kw, constraint):
    base = dict(a=1.0, sigma_tilde=2.0, b_tilde=4.0, mu=1.0)
    base.update(kw)
    with pytest.raises(ParameterError) as exc:
        derive_params(**base)
    assert exc.value.constraint == constraint


def test_b_positive_just_above_floor():
    p = derive_params(1.0, 2.0, 2.0 + 1e-9, 1.0)
    assert p.b > 0


def test_unchecked_allows_zero_vol():
    p = unchecked_params(1.0, 0.0, 4.0)
    assert p.sigma_tilde == 0.0
    with pytest.raises(ParameterError):
        ModelParams(1.0, 0.0, 4.0)


def test_state_rejects_negative_capital():
    assert State(0.5, 0.0).x == 0.0
    with pytest.raises(ParameterError):
        State(0.5, -1e-12)
