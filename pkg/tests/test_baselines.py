import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from zfhgm.baselines import (gamma_approx, gamma_approx_measures, gamma_measure,
                             rayleigh_outage, rician_rayleigh_mgf, worst_case_condition,
                             worst_case_los)
from zfhgm.channel import ChannelSpec, correlation_for, derive_snr_params
from zfhgm.series import (Capacity, Mgf, OutageProb, Pdf, TruncationPolicy,
                          eval_series)

TAU = 10 ** 0.82


def test_rayleigh_outage_examples():
    assert rayleigh_outage(1, 0.7) == pytest.approx(1 - math.exp(-0.7))
    assert rayleigh_outage(3, 1.0) == pytest.approx(0.0803014, abs=5e-8)
    assert rayleigh_outage(3, 0.0) == 0.0
    with pytest.raises(ValueError):
        rayleigh_outage(0, 1.0)


@given(st.floats(0.05, 40.0))
def test_rayleigh_outage_matches_series(g1):
    from zfhgm.channel import SnrParams
    p = SnrParams(gamma1=g1, x1=0.0, x2=0.0, n_rx=6, n_tx=4)
    val = eval_series(OutageProb(TAU), p).value
    assert val == pytest.approx(rayleigh_outage(3, TAU / g1), rel=1e-10, abs=1e-300)


@pytest.mark.parametrize("n,scale", [(1, 0.5), (3, 4.0), (5, 20.0)])
def test_gamma_measures_against_quadrature(n, scale):
    dist = stats.gamma(n, scale=scale)
    cap = integrate.quad(lambda t: math.log2(1 + t) * dist.pdf(t), 0, np.inf, limit=200)[0]
    assert gamma_measure(Capacity(), n, scale) == pytest.approx(cap, rel=1e-8)
    mgf = integrate.quad(lambda t: math.exp(-0.3 * t) * dist.pdf(t), 0, np.inf)[0]
    assert gamma_measure(Mgf(-0.3), n, scale) == pytest.approx(mgf, rel=1e-8)
    assert gamma_measure(Pdf(1.3), n, scale) == pytest.approx(dist.pdf(1.3))
    assert gamma_measure(OutageProb(2.0), n, scale) == pytest.approx(dist.cdf(2.0))


def test_gamma_approx_exact_without_los(a1):
    spec, r = a1
    spec = spec.with_k(-300.0)
    g = gamma_approx(spec, r, 10.0)
    assert g.gamma1_hat == pytest.approx(derive_snr_params(spec, r, 10.0).gamma1, rel=1e-12)


@given(st.floats(-10, 20), st.floats(5, 80), st.integers(0, 3))
def test_gamma1_hat_dominates(k_db, as_deg, stream):
    spec = ChannelSpec(6, 4, k_db, as_deg)
    r = correlation_for(spec)
    g = gamma_approx(spec, r, 1.0, stream)
    assert g.gamma1_hat >= derive_snr_params(spec, r, 1.0, stream).gamma1 * (1 - 1e-12)


def test_worst_case_probe_makes_gamma_exact(a1):
    spec, r = a1
    los = worst_case_los(spec, r)
    wc = worst_case_condition(spec, r, los=los)
    assert wc.residual < 1e-10 and wc.x1 < 1e-10
    p = derive_snr_params(spec, r, 30.0, los=los)
    assert p.x1 == pytest.approx(0.0, abs=1e-10)
    exact = eval_series(OutageProb(TAU), p, TruncationPolicy(rel_tol=1e-14)).value
    approx = gamma_approx_measures(spec, r, 30.0, OutageProb(TAU), los=los)
    assert approx == pytest.approx(exact, rel=1e-8)


def test_worst_case_rayleigh_and_random(a1):
    spec, r = a1
    assert worst_case_condition(spec.with_k(-400.0), r).residual < 1e-12
    wc = worst_case_condition(spec, r)
    assert wc.residual > 0 and wc.x1 > 0
    assert wc.x1 == pytest.approx(derive_snr_params(spec, r, 1.0).x1, rel=1e-9)


def test_worst_case_minimum_at_cluster_angle():
    angles = np.arange(-25.0, 36.0, 5.0)
    res = []
    for t in angles:
        spec = ChannelSpec(6, 4, 7.0, 12.0, theta_t_deg=t, theta_c_deg=5.0)
        res.append(worst_case_condition(spec, correlation_for(spec)).residual)
    assert angles[int(np.argmin(res))] == 5.0


def test_rician_rayleigh_mgf_matches_series(a1):
    spec, r = a1
    p = derive_snr_params(spec, r, 2.0)
    from dataclasses import replace
    p0 = replace(p, x2=0.0, c1=None)
    s = -0.4
    # the alternating kernel sums cancel badly here, so use 60 digits
    val = eval_series(Mgf(s), p0, TruncationPolicy(rel_tol=1e-15, n_max=400, precision=60))
    assert float(val.value) == pytest.approx(rician_rayleigh_mgf(p0, s), rel=1e-10)
    assert not eval_series(Mgf(s), p0).trusted
