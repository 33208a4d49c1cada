import numpy as np
import pytest
from hypothesis import given, strategies as st

from zfhgm.channel import (ChannelSpec, CorrelationMatrix, DegenerateCorrelation,
                           correlation_for, cyclic_order, db2lin, derive_snr_params,
                           gamma_s_from_gamma_b, laplacian_correlation, load_scenarios,
                           sample_winner_params, scenario_spec, steering_vectors)


def test_spec_validation():
    with pytest.raises(ValueError):
        ChannelSpec(3, 1, 0.0, 10.0)
    with pytest.raises(ValueError):
        ChannelSpec(3, 4, 0.0, 10.0)
    with pytest.raises(ValueError):
        ChannelSpec(6, 4, 0.0, 0.0)
    with pytest.raises(ValueError):
        ChannelSpec(6, 4, 0.0, 10.0, phase="tan")
    assert ChannelSpec(6, 4, 7.0, 51.0).n_dof == 3


def test_gamma_s_from_gamma_b():
    assert gamma_s_from_gamma_b(0.0) == 2.0
    assert gamma_s_from_gamma_b(10.0, bits_per_symbol=4) == pytest.approx(40.0)


def test_broadside_cos_convention_gives_flat_response():
    # theta = 90 degrees from the array axis: no phase progression
    spec = ChannelSpec(6, 4, 7.0, 51.0, theta_r_deg=90.0, theta_t_deg=90.0, phase="cos")
    los = steering_vectors(spec)
    assert np.allclose(los.a * np.sqrt(6), np.ones(6))
    assert np.allclose(los.b / los.b[0], np.ones(4))


def test_los_power_normalization():
    spec = ChannelSpec(6, 4, 7.0, 51.0)
    los = steering_vectors(spec)
    k = spec.k_linear
    assert np.linalg.norm(los.a) == pytest.approx(1.0)
    assert np.linalg.norm(los.h_d) ** 2 == pytest.approx(k / (k + 1) * 24)


def test_correlation_anchor_low():
    r = laplacian_correlation(51.0, 5.0, 4)
    assert abs(r.r_t[0, 1]) == pytest.approx(0.12, abs=0.02)


def test_correlation_matrix_structure(a1):
    _, r = a1
    m = r.r_t
    assert np.allclose(np.diag(m), 1.0)
    assert np.allclose(m, m.conj().T)
    assert np.linalg.eigvalsh(m).min() > 0
    # Toeplitz
    assert m[0, 1] == pytest.approx(m[2, 3])


@given(st.floats(2.0, 30.0), st.floats(-30.0, 30.0))
def test_correlation_magnitude_decreases_with_spread(as_deg, theta_c):
    lo = abs(laplacian_correlation(as_deg, theta_c, 2).r_t[0, 1])
    hi = abs(laplacian_correlation(as_deg * 1.5, theta_c, 2).r_t[0, 1])
    assert hi <= lo + 1e-9


def test_z0_value_identity_correlation():
    spec = ChannelSpec(6, 4, -25.0, 51.0)
    p = derive_snr_params(spec, CorrelationMatrix.identity(4), 1.0)
    assert round(p.x2, 5) == 0.05692


def test_a1_parameters(a1):
    spec, r = a1
    p = derive_snr_params(spec, r, gamma_s_from_gamma_b(15.0))
    assert p.n_dof == 3
    assert p.c1 == pytest.approx(p.x1 / p.x2)
    assert p.x1 > 0 and p.x2 > 0 and p.gamma1 > 0


@given(st.floats(-20.0, 20.0), st.floats(1.0, 10.0))
def test_x_scale_linearly_with_k(k_db, step):
    spec = ChannelSpec(6, 4, k_db, 30.0)
    r = correlation_for(spec)
    p1 = derive_snr_params(spec, r, 1.0)
    p2 = derive_snr_params(spec.with_k(k_db + step), r, 1.0)
    ratio = db2lin(k_db + step) / db2lin(k_db)
    assert p2.x1 / p1.x1 == pytest.approx(ratio, rel=1e-8)
    assert p2.x2 / p1.x2 == pytest.approx(ratio, rel=1e-8)
    assert p2.c1 == pytest.approx(p1.c1, rel=1e-8)


@given(st.integers(2, 5), st.integers(0, 6))
def test_c1_independent_of_receive_count(n_tx, extra):
    a = ChannelSpec(n_tx + extra, n_tx, 3.0, 40.0)
    b = ChannelSpec(n_tx + extra + 3, n_tx, 3.0, 40.0)
    r = correlation_for(a)
    pa, pb = derive_snr_params(a, r, 1.0), derive_snr_params(b, r, 1.0)
    assert pb.c1 == pytest.approx(pa.c1, rel=1e-9)
    assert pb.x2 / pa.x2 == pytest.approx(b.n_rx / a.n_rx, rel=1e-9)


def test_gamma1_matches_inverse_diagonal(a1):
    spec, r = a1
    p = derive_snr_params(spec, r, 5.0, stream=2)
    rk = r.scaled(spec.k_linear)
    assert p.gamma1 == pytest.approx(5.0 / np.linalg.inv(rk)[2, 2].real, rel=1e-12)


def test_rician_rayleigh_when_other_columns_have_no_los(a1):
    spec, r = a1
    los = steering_vectors(spec)
    b = los.b.copy()
    b[1:] = 0
    p = derive_snr_params(spec, r, 1.0, los=type(los)(a=los.a, b=b))
    assert p.x2 == 0 and p.c1 is None and p.rician_rayleigh
    with pytest.raises(ValueError):
        p.at_z(1.0)


def test_degenerate_correlation():
    r = CorrelationMatrix(np.ones((4, 4), dtype=complex))
    with pytest.raises(DegenerateCorrelation):
        derive_snr_params(ChannelSpec(6, 4, 0.0, 10.0), r, 1.0)


def test_cyclic_order():
    assert cyclic_order(4, 1) == [1, 2, 3, 0]


def test_scenarios_and_sampler():
    table = load_scenarios()
    assert set(table) >= {"A1", "C2"}
    spec = scenario_spec("A1")
    assert spec.k_db == 7.0 and spec.as_deg == pytest.approx(51.0)
    d1 = sample_winner_params("A1", 50, 3)
    assert d1 == sample_winner_params("A1", 50, 3)
    assert all(a > 0 for _, a in d1)
    with pytest.raises(KeyError):
        sample_winner_params("B9", 5, 0)
    with pytest.raises(KeyError):
        sample_winner_params("A1", 5, 0, config={"A1": {"k_db_mean": 7}})


def test_sampler_with_zero_spread_returns_means():
    cfg = {"X": dict(k_db_mean=7.0, k_db_std=0.0, as_log10_mean=1.5, as_log10_std=0.0)}
    draws = sample_winner_params("X", 4, 0, config=cfg)
    assert all(k == 7.0 and a == pytest.approx(10 ** 1.5) for k, a in draws)
