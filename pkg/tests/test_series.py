import math

import pytest
from hypothesis import given, strategies as st

from zfhgm.channel import derive_snr_params, gamma_s_from_gamma_b
from zfhgm.series import (Capacity, Mgf, OutageProb, Pdf, TruncationPolicy,
                          eval_double_series, eval_series, eval_series_derivatives,
                          g_coefficients, kernel_h, measure_from_dict, measure_to_dict)
from zfhgm.special import gammainc_lower, make_context

TAU = 10 ** 0.82


@pytest.fixture(scope="module")
def p15(a1):
    spec, r = a1
    return derive_snr_params(spec, r, gamma_s_from_gamma_b(15.0))


@pytest.mark.parametrize("kind", [OutageProb(TAU), Capacity(), Mgf(-0.02), Pdf(5.0)])
def test_single_matches_double(p15, kind):
    a = eval_series(kind, p15)
    b = eval_double_series(kind, p15)
    assert a.converged and b.converged
    assert a.value == pytest.approx(b.value, rel=1e-9)


def test_float_matches_mp(p15):
    a = eval_series(OutageProb(TAU), p15)
    b = eval_series(OutageProb(TAU), p15, TruncationPolicy(precision=60))
    assert a.value == pytest.approx(float(b.value), rel=1e-10)
    assert a.trusted


def test_a1_outage_reference_value(p15):
    assert eval_series(OutageProb(TAU), p15).value == pytest.approx(0.01539174425, rel=1e-7)


@given(st.floats(0.01, 3.0))
def test_outage_is_probability_and_monotone(z):
    from zfhgm.channel import ChannelSpec, correlation_for
    spec = ChannelSpec(6, 4, 7.0, 51.0)
    p = derive_snr_params(spec, correlation_for(spec), 30.0).at_z(z)
    lo = eval_series(OutageProb(2.0), p).value
    hi = eval_series(OutageProb(6.0), p).value
    assert 0 <= lo <= hi <= 1


def test_mgf_at_zero_is_one(p15):
    assert eval_series(Mgf(0.0), p15).value == pytest.approx(1.0, rel=1e-9)


def test_no_los_reduces_to_gamma_cdf(p15):
    from dataclasses import replace
    p = replace(p15, x1=0.0, x2=0.0, c1=None)
    val = eval_series(OutageProb(TAU), p).value
    ref = float(gammainc_lower(p.n_dof, TAU / p.gamma1, make_context(30)))
    assert val == pytest.approx(ref, rel=1e-12)


def test_derivative_against_finite_difference(p15):
    z0, eps = 0.4, 1e-4
    d = eval_series_derivatives(OutageProb(TAU), p15, z0, 2, TruncationPolicy(precision=40))
    f = lambda z: eval_series(OutageProb(TAU), p15.at_z(z)).value
    assert float(d[0]) == pytest.approx(f(z0), rel=1e-10)
    assert float(d[1]) == pytest.approx((f(z0 + eps) - f(z0 - eps)) / (2 * eps), rel=1e-6)


def test_exact_mgf_coefficients(p15):
    from fractions import Fraction
    from dataclasses import replace
    from zfhgm.series import EXACT
    p = replace(p15, gamma1=Fraction(1, 3), c1=Fraction(2, 5))
    g = g_coefficients(Mgf(Fraction(-1)), p, 8, EXACT)
    assert all(isinstance(v, Fraction) for v in g)
    gf = g_coefficients(Mgf(-1.0), replace(p15, gamma1=1 / 3, c1=0.4), 8)
    assert [float(v) for v in g] == pytest.approx(gf, rel=1e-12)


def test_kernel_h0_is_shape_value(p15):
    assert kernel_h(OutageProb(TAU), 0, p15) == pytest.approx(
        float(gammainc_lower(3, TAU / p15.gamma1, make_context(30))), rel=1e-13)


def test_bad_arguments(p15):
    with pytest.raises(ValueError):
        eval_series(Mgf(1.0 / p15.gamma1 * 2), p15)
    with pytest.raises(ValueError):
        TruncationPolicy(rel_tol=0)
    with pytest.raises(ValueError):
        measure_from_dict({"kind": "ber"})


def test_measure_dict_roundtrip():
    for k in (OutageProb(3.0), Capacity(), Mgf(-1.0), Pdf(2.0)):
        assert measure_from_dict(measure_to_dict(k)) == k


def test_truncation_flag(p15):
    res = eval_series(OutageProb(TAU), p15.at_z(40.0), TruncationPolicy(n_max=10))
    assert not res.converged and not res.trusted
