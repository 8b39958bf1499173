import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from svleverage.errors import DomainError, PropagationError
from svleverage.model import (
    ALL_PARAM_NAMES,
    DEFAULT_F0,
    TABLE1_FIXED,
    TABLE1_RW,
    FixedLevParams,
    LatentState,
    RwLevParams,
    beta_t,
    fisher_to_rho,
    init_state,
    make_params,
    obs_logdensity,
    rho_to_f,
    shock_recovery,
    sigma_omega,
    simulate,
    step_fixed,
    step_rw,
    transform_for,
)


# ---------------------------------------------------------------------------
# Fisher transform


def test_fisher_examples():
    assert fisher_to_rho(0.0) == 0.0
    assert fisher_to_rho(math.log(3) / 2) == pytest.approx(0.5, abs=1e-15)
    assert fisher_to_rho(0.549306) == pytest.approx(0.5, abs=1e-6)
    v = fisher_to_rho(50.0)
    assert 1 - 1e-12 < v < 1
    assert -1 < fisher_to_rho(-1e308) < -1 + 1e-12


def test_fisher_rejects_non_finite():
    for bad in (np.nan, np.inf, -np.inf):
        with pytest.raises(DomainError):
            fisher_to_rho(bad)


def test_rho_to_f_examples():
    assert rho_to_f(0.0) == 0.0
    assert rho_to_f(0.5) == pytest.approx(0.549306, abs=1e-6)
    # 0.5 * ln(1.6579 / 0.3421) = -0.78910 (not -0.7902)
    assert rho_to_f(-0.6579) == pytest.approx(-0.789102, abs=1e-6)
    for bad in (1.0, -1.0, 1.5):
        with pytest.raises(DomainError):
            rho_to_f(bad)


@given(st.floats(-7.0, 7.0))
def test_fisher_round_trip_on_reals(f):
    # beyond |f| ~ 7 the spacing of doubles near 1 makes atanh lose digits
    assert rho_to_f(fisher_to_rho(f)) == pytest.approx(f, abs=1e-10)


@given(st.floats(-0.999999, 0.999999))
def test_fisher_round_trip_on_interval(r):
    assert fisher_to_rho(rho_to_f(r)) == pytest.approx(r, abs=1e-10)


@pytest.mark.parametrize("name", ALL_PARAM_NAMES)
def test_transform_round_trip(name):
    tr = transform_for(name)
    domain = {
        "mu_h": [-5.0, -0.25, 0.0, 3.0],
        "phi": [1e-6, 0.5, 0.9805, 0.999999],
        "sigma_eta": [1e-8, 0.9, 40.0],
        "rho": [-0.999, -0.6579, 0.0, 0.7],
        "sigma_nu": [1e-6, 0.0086, 2.0],
        "f0": [-3.0, DEFAULT_F0, 2.0],
    }[name]
    for x in domain:
        assert float(tr.inverse(tr.forward(x))) == pytest.approx(x, abs=1e-12, rel=1e-12)


def test_transform_jacobian_matches_finite_difference():
    for name in ("phi", "sigma_eta", "rho"):
        tr = transform_for(name)
        z = 0.3
        fd = (tr.inverse(z + 1e-6) - tr.inverse(z - 1e-6)) / 2e-6
        assert float(tr.jacobian(z)) == pytest.approx(float(fd), rel=1e-6)


# ---------------------------------------------------------------------------
# variance decomposition pieces


def test_sigma_omega_examples():
    assert sigma_omega(1.0, 0.0, 0.0) == 1.0
    assert sigma_omega(0.9003, 0.9805, 0.0) == pytest.approx(0.17693, abs=1e-5)
    assert sigma_omega(0.9003, 0.9805, -0.6579) == pytest.approx(0.13325, abs=1e-5)
    with pytest.raises(DomainError):
        sigma_omega(0.9, 1.0, 0.0)
    with pytest.raises(DomainError):
        sigma_omega(-0.1, 0.5, 0.0)


def test_beta_examples():
    assert beta_t(0.0, 0.7, 0.3) == 0.0
    assert beta_t(1.0, 0.9003, 0.9805) == pytest.approx(0.17693, abs=1e-5)
    assert beta_t(-2.0, 1.0, 0.0) == -2.0


def test_obs_logdensity_examples():
    assert obs_logdensity(0.0, 0.0) == pytest.approx(-0.918939, abs=1e-6)
    assert obs_logdensity(1.0, 0.0) == pytest.approx(-1.418939, abs=1e-6)
    assert obs_logdensity(0.0, 2 * math.log(2)) == pytest.approx(-1.612086, abs=1e-6)


@pytest.mark.parametrize("h", [-2.0, 0.0, 2.0])
def test_obs_density_integrates_to_one(h):
    # composite Simpson on [-50, 50]; the tails beyond are below 1e-100
    n = 200_000
    y = np.linspace(-50.0, 50.0, n + 1)
    f = np.exp(obs_logdensity(y, h))
    dx = 100.0 / n
    integral = dx / 3 * (f[0] + f[-1] + 4 * f[1:-1:2].sum() + 2 * f[2:-1:2].sum())
    assert integral == pytest.approx(1.0, abs=1e-8)


def test_shock_recovery_examples():
    assert shock_recovery(0.0, 17.0) == 0.0
    assert shock_recovery(1.0, 0.0) == 1.0
    assert shock_recovery(2.0, 2 * math.log(2)) == pytest.approx(1.0, abs=1e-15)


# ---------------------------------------------------------------------------
# parameter objects


def test_param_validation():
    with pytest.raises(DomainError):
        FixedLevParams(0.0, 1.0, 0.9, 0.0)
    with pytest.raises(DomainError):
        FixedLevParams(0.0, 0.0, 0.9, 0.0)
    with pytest.raises(DomainError):
        FixedLevParams(0.0, 0.5, 0.0, 0.0)
    with pytest.raises(DomainError):
        FixedLevParams(0.0, 0.5, 0.9, -1.0)
    with pytest.raises(DomainError):
        RwLevParams(0.0, 0.5, 0.9, -0.01, 0.0)
    with pytest.raises(DomainError):
        make_params("ar1", {})


def test_estimation_scale_round_trip():
    for p in (TABLE1_FIXED, TABLE1_RW):
        q = type(p).from_estimation(p.to_estimation())
        for n in p.names:
            assert getattr(q, n) == pytest.approx(getattr(p, n), rel=1e-12, abs=1e-14)


def test_default_f0_matches_stable_early_leverage():
    assert math.tanh(DEFAULT_F0) == pytest.approx(-0.4, abs=1e-15)
    assert TABLE1_RW.f0 == DEFAULT_F0


# ---------------------------------------------------------------------------
# initial state


def test_init_degenerate_sigma():
    p = TABLE1_FIXED.replace(sigma_eta=1e-300)
    s = init_state("fixed", p, rng=np.random.default_rng(1), size=5)
    assert np.all(s.h == p.mu_h)


def test_init_moments():
    p = FixedLevParams(-0.25, 0.9, 0.9, 0.0)
    s = init_state("fixed", p, rng=np.random.default_rng(2024), size=1_000_000)
    assert abs(np.mean(s.h) - (-0.25)) < 0.003
    assert abs(np.std(s.h) - 0.9) < 0.002


def test_init_rw_sets_f0():
    p = TABLE1_RW.replace(f0=-0.42)
    s = init_state("rw", p, rng=np.random.default_rng(3), size=100)
    assert np.all(s.f == -0.42)


# ---------------------------------------------------------------------------
# transitions


def test_step_fixed_fixed_point():
    p = TABLE1_FIXED.replace(rho=0.0)
    assert step_fixed(p.mu_h, 1.3, p, omega=0.0) == pytest.approx(p.mu_h, abs=1e-15)


def test_step_fixed_table_value():
    assert step_fixed(0.0, 1.0, TABLE1_FIXED, omega=0.0) == pytest.approx(-0.12129, abs=1e-5)


def test_step_fixed_innovation_variance():
    p = TABLE1_FIXED
    h_prev = np.full(100_000, 0.4)
    h = step_fixed(h_prev, -0.7, p, rng=np.random.default_rng(8))
    det = step_fixed(h_prev, -0.7, p, omega=np.zeros_like(h_prev))
    target = sigma_omega(p.sigma_eta, p.phi, p.rho) ** 2
    assert np.var(h - det) == pytest.approx(target, rel=0.02)


def test_step_fixed_divergence_raises():
    p = TABLE1_FIXED
    with pytest.raises(PropagationError) as info:
        step_fixed(-800.0, 0.0, p, omega=0.0, t=12)
    assert info.value.t == 12


def test_step_rw_nests_fixed_model():
    p = TABLE1_RW.replace(sigma_nu=1e-300, f0=rho_to_f(-0.5))
    prev = LatentState(np.array([0.3, -1.0]), np.array([p.f0, p.f0]))
    out = step_rw(prev, 0.8, p, nu=np.array([1.7, -0.4]), omega=np.array([0.2, -1.1]))
    assert np.all(out.f == p.f0)
    fixed = FixedLevParams(p.mu_h, p.phi, p.sigma_eta, math.tanh(p.f0))
    expect = step_fixed(prev.h, 0.8, fixed, omega=np.array([0.2, -1.1]))
    np.testing.assert_allclose(out.h, expect, rtol=0, atol=1e-14)


def test_step_rw_zero_leverage():
    p = TABLE1_RW
    out = step_rw(LatentState(0.7, 0.0), 2.0, p, nu=0.0, omega=0.0)
    assert out.f == 0.0
    assert out.h == pytest.approx(p.mu_h * (1 - p.phi) + p.phi * 0.7, abs=1e-15)


# ---------------------------------------------------------------------------
# simulation


def test_simulate_deterministic():
    a, pa = simulate("rw", TABLE1_RW, 500, seed=4)
    b, pb = simulate("rw", TABLE1_RW, 500, seed=4)
    assert np.array_equal(a.values, b.values)
    for k in ("h", "f", "rho", "eps"):
        assert np.array_equal(pa[k], pb[k])
    c, _ = simulate("rw", TABLE1_RW, 500, seed=5)
    assert not np.array_equal(a.values, c.values)


def test_simulate_rejects_bad_horizon():
    with pytest.raises(DomainError):
        simulate("fixed", TABLE1_FIXED, 0)


def test_simulate_nesting_same_h_path():
    rho = -0.6579
    fixed = TABLE1_FIXED.replace(rho=rho)
    rw = RwLevParams(fixed.mu_h, fixed.phi, fixed.sigma_eta, 1e-300, rho_to_f(rho))
    ya, pa = simulate("fixed", fixed, 3000, seed=21)
    yb, pb = simulate("rw", rw, 3000, seed=21)
    np.testing.assert_allclose(pa["h"], pb["h"], rtol=0, atol=1e-12)
    np.testing.assert_allclose(ya.values, yb.values, rtol=0, atol=1e-12)


def test_simulate_first_step_has_no_leverage():
    _, paths = simulate("fixed", TABLE1_FIXED, 3, seed=0)
    assert math.isnan(paths["eta"][0])
    assert np.all(np.isfinite(paths["eta"][1:]))


@pytest.mark.slow
def test_stationary_moments_without_leverage():
    p = TABLE1_FIXED.replace(rho=0.0)
    T = 200_000
    _, paths = simulate("fixed", p, T, seed=101)
    h = paths["h"]
    # AR(1) long-run variance inflation for the mean and the variance
    se_mean = p.sigma_eta * math.sqrt((1 + p.phi) / (1 - p.phi) / T)
    se_sd = p.sigma_eta * math.sqrt((1 + p.phi ** 2) / (1 - p.phi ** 2) / (2 * T))
    assert abs(h.mean() - p.mu_h) < min(0.06, 3 * se_mean)
    assert abs(h.std() - p.sigma_eta) < min(0.02, 3 * se_sd)


def test_rw_boundedness_long_run():
    p = TABLE1_RW.replace(sigma_nu=0.0086)
    _, paths = simulate("rw", p, 50_000, seed=9)
    assert np.all(np.abs(paths["rho"]) < 1)


def test_rw_boundedness_extreme_walk():
    # a violent leverage walk saturates tanh but never reaches +-1
    p = TABLE1_RW.replace(sigma_nu=5.0)
    _, paths = simulate("rw", p, 2_000, seed=2)
    assert np.all(np.abs(paths["rho"]) < 1)
    assert np.max(np.abs(paths["f"])) > 20
