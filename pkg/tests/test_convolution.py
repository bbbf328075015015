import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from srdelab.convolution import (ConvolutionConfig, beta_constant, factorization_reconstruct,
                                 moment_bound_check, singular_integral,
                                 stochastic_convolution_direct, sup_moment_scaling, uniform_times,
                                 z_alpha_path, _product_weights)
from srdelab.errors import InvalidArgument
from srdelab.model import ModelSpec
from srdelab.rng import CoarsenedStreams, GaussianStreams, trial_seeds
from srdelab.spectral import (dirichlet_interval_basis, inverse_transform, power_law_noise,
                              white_noise, zero_noise)

TRACE = power_law_noise(2.0, rho=2.0)


def streams(master, trials, width):
    return GaussianStreams(trial_seeds(master, range(trials)), width)


def rel_linf(a, b, basis):
    ga, gb = inverse_transform(basis, a), inverse_transform(basis, b)
    return np.max(np.abs(ga - gb)) / np.max(np.abs(gb))


@pytest.mark.parametrize("kw", [dict(zeta=0.0), dict(zeta=0.4), dict(p=1.5), dict(rule="simpson"),
                                dict(alpha=0.0), dict(dt=2.0)])
def test_config_window(kw):
    with pytest.raises(InvalidArgument):
        ConvolutionConfig(**kw)


def test_config_window_alpha_vs_eta():
    cfg = ConvolutionConfig(alpha=0.25, zeta=0.2)
    cfg.check_window(0.4)
    with pytest.raises(InvalidArgument):
        cfg.check_window(0.5)
    assert ConvolutionConfig(alpha=0.45, zeta=0.4, p=5).sup_window_ok
    assert not ConvolutionConfig(alpha=0.2, zeta=0.2, p=2).sup_window_ok


def test_grid_errors(basis32):
    with pytest.raises(InvalidArgument):
        stochastic_convolution_direct(1.0, basis32, TRACE, [0.0, 0.1, 0.3], streams(0, 1, 32))
    with pytest.raises(InvalidArgument):
        stochastic_convolution_direct(1.0, basis32, TRACE, [0.1, 0.2], streams(0, 1, 32))
    with pytest.raises(InvalidArgument):
        stochastic_convolution_direct(np.ones((5, 7)), basis32, TRACE, uniform_times(0.1, 1.0),
                                      streams(0, 1, 32))


def test_zero_sigma_and_zero_start(basis32):
    t = uniform_times(1e-2, 0.5)
    z = stochastic_convolution_direct(0.0, basis32, TRACE, t, streams(1, 3, 32))
    assert not z.any()
    z = stochastic_convolution_direct(1.0, basis32, TRACE, t, streams(1, 3, 32))
    assert not z[:, 0].any() and z[:, 1:].any()


def test_field_sigma_matches_scalar(basis32):
    t = uniform_times(1e-2, 0.3)
    a = stochastic_convolution_direct(2.0, basis32, TRACE, t, streams(2, 4, 32))
    b = stochastic_convolution_direct(np.full((30, basis32.grid_size), 2.0), basis32, TRACE, t,
                                      streams(2, 4, 32))
    np.testing.assert_allclose(a, b, atol=1e-13)


def test_keep_selects_times(basis32):
    t = uniform_times(1e-2, 0.5)
    full = stochastic_convolution_direct(1.0, basis32, TRACE, t, streams(3, 2, 32))
    part = stochastic_convolution_direct(1.0, basis32, TRACE, t, streams(3, 2, 32), keep=[10, 50])
    np.testing.assert_array_equal(part, full[:, [10, 50]])


def test_single_mode_isometry(basis32):
    # one noise mode with lambda_1 = 1: the e_1 coefficient is an OU integral
    t = uniform_times(1e-3, 1.0)
    z = stochastic_convolution_direct(1.0, basis32, white_noise(), t, streams(4, 10 ** 4, 1),
                                      keep=[250, 1000])
    a1 = basis32.eigenvalues[0]
    for i, tt in enumerate((0.25, 1.0)):
        exact = (1 - math.exp(-2 * a1 * tt)) / (2 * a1)
        assert np.var(z[:, i, 0]) == pytest.approx(exact, rel=0.05)
        assert not z[:, i, 1:].any()


def test_per_mode_isometry(basis32):
    # the scheme's own variance is a geometric sum; it tends to the continuous
    # one only for modes with alpha_k dt small
    dt, n = 1e-3, 500
    t = uniform_times(dt, n * dt)
    z = stochastic_convolution_direct(1.0, basis32, TRACE, t, streams(5, 10 ** 4, 32), keep=[n])
    lam, al = TRACE.values(32), basis32.eigenvalues
    var = np.var(z[:, 0], axis=0)
    discrete = dt * (1 - np.exp(-2 * al * dt * n)) / (1 - np.exp(-2 * al * dt)) * lam ** 2
    np.testing.assert_allclose(var, discrete, rtol=0.05)
    continuous = (1 - np.exp(-2 * al * dt * n)) / (2 * al) * lam ** 2
    resolved = al * dt <= 0.01
    np.testing.assert_allclose(var[resolved], continuous[resolved], rtol=0.05)


def test_z_alpha_window(basis32):
    t = uniform_times(1e-2, 0.1)
    with pytest.raises(InvalidArgument):
        z_alpha_path(1.0, basis32, white_noise(), 0.2, t, streams(0, 1, 32))
    z_alpha_path(1.0, basis32, white_noise(), 0.19, t, streams(0, 1, 32))


def test_z_alpha_small_alpha_limit(basis32):
    # the weight ((j+1) dt)^-alpha differs from 1 by about alpha |log((j+1) dt)|,
    # so the deviation is linear in alpha and below alpha |log dt|
    dt = 1e-3
    t = uniform_times(dt, 0.5)
    direct = stochastic_convolution_direct(1.0, basis32, TRACE, t, streams(6, 4, 32))
    dev = {a: rel_linf(z_alpha_path(1.0, basis32, TRACE, a, t, streams(6, 4, 32)), direct, basis32)
           for a in (1e-9, 1e-7, 1e-6)}
    assert dev[1e-9] <= 1e-8
    assert dev[1e-6] <= 1e-6 * abs(math.log(dt))
    assert dev[1e-6] / dev[1e-7] == pytest.approx(10, rel=1e-3)


def test_z_alpha_zero_cutoff(basis32):
    t = uniform_times(1e-2, 0.5)
    z = z_alpha_path(1.0, basis32, TRACE, 0.2, t, streams(7, 3, 32), cutoff=np.zeros(50))
    assert not z.any()


def test_z_alpha_weight_monotone():
    dt, alpha = 1e-3, 0.3
    n = 200
    # weight on increment m seen from t_n, as s = t_m increases towards t_n
    w = ((n - np.arange(n)) * dt) ** (-alpha)
    assert np.all(np.diff(w) > 0) and w[-1] == dt ** (-alpha)


@pytest.mark.parametrize("cut", [5, 37, 100])
def test_stopped_equals_unstopped_before_tau(cut, basis32):
    t = uniform_times(1e-2, 1.0)
    cutoff = (np.arange(100) < cut).astype(float)
    full = z_alpha_path(1.0, basis32, TRACE, 0.2, t, streams(8, 5, 32))
    stopped = z_alpha_path(1.0, basis32, TRACE, 0.2, t, streams(8, 5, 32), cutoff=cutoff)
    np.testing.assert_array_equal(stopped[:, :cut + 1], full[:, :cut + 1])
    if cut < 100:
        assert np.any(stopped[:, cut + 1:] != full[:, cut + 1:])


def test_reconstruct_zero_and_shape(basis32):
    t = uniform_times(1e-2, 0.5)
    assert not factorization_reconstruct(np.zeros((51, 32)), basis32, 0.2, t).any()
    with pytest.raises(InvalidArgument):
        factorization_reconstruct(np.zeros((50, 32)), basis32, 0.2, t)
    with pytest.raises(InvalidArgument):
        factorization_reconstruct(np.zeros((51, 32)), basis32, 1.2, t)


@pytest.mark.parametrize("alpha", [0.1, 0.2, 0.4])
def test_reconstruct_constant_input_oracle(alpha, basis32):
    t = uniform_times(1e-2, 1.0)
    v = np.random.default_rng(0).normal(size=32)
    out = factorization_reconstruct(np.tile(v, (101, 1)), basis32, alpha, t)
    c = math.sin(math.pi * alpha) / math.pi
    for n in (1, 17, 100):
        for k in (0, 5, 31):
            lam = basis32.eigenvalues[k]
            ref = integrate.quad(lambda r: math.exp(-lam * r), 0, t[n], weight="alg",
                                 wvar=(alpha - 1, 0), epsabs=1e-14, epsrel=1e-12)[0]
            assert out[n, k] == pytest.approx(c * ref * v[k], abs=1e-6 * max(1, abs(v[k])))


def test_product_weights_against_quad():
    lam = np.array([0.0, 1.0, 49.0, 1024.0])
    w = _product_weights(0.3, lam, 1e-2, 40)
    for j in (0, 1, 39):
        for k, l in enumerate(lam):
            ref = integrate.quad(lambda r: r ** (0.3 - 1) * math.exp(-l * r), j * 1e-2,
                                 (j + 1) * 1e-2, epsabs=1e-15)[0]
            assert w[j, k] == pytest.approx(ref, rel=1e-9, abs=1e-15)


def test_product_rule_beats_midpoint(basis32):
    t = uniform_times(1e-2, 1.0)
    v = np.ones(32)
    errs = {}
    for rule in ("product", "midpoint"):
        out = factorization_reconstruct(np.tile(v, (101, 1)), basis32, 0.2, t, rule=rule)
        lam = basis32.eigenvalues[0]
        ref = integrate.quad(lambda r: math.exp(-lam * r), 0, 1.0, weight="alg",
                             wvar=(0.2 - 1, 0))[0] * math.sin(0.2 * math.pi) / math.pi
        errs[rule] = abs(out[100, 0] - ref)
    assert errs["product"] < 1e-10 < errs["midpoint"]


def _factorization_error(dt, seeds, basis, factor=1):
    # factor > 1 sums fine normals so both resolutions see one Brownian path
    t = uniform_times(dt, 1.0)
    J = basis.num_modes

    def noise():
        base = GaussianStreams(seeds, J)
        return base if factor == 1 else CoarsenedStreams(base, factor)

    direct = stochastic_convolution_direct(1.0, basis, TRACE, t, noise())
    za = z_alpha_path(1.0, basis, TRACE, 0.2, t, noise())
    rec = factorization_reconstruct(za, basis, 0.2, t)
    return np.array([rel_linf(rec[i], direct[i], basis) for i in range(len(seeds))])


@pytest.mark.slow
def test_factorization_improves_under_refinement(basis32):
    seeds = trial_seeds(11, range(6))
    coarse = _factorization_error(1e-3, seeds, basis32, factor=2)
    fine = _factorization_error(5e-4, seeds, basis32)
    assert np.all(fine < coarse)
    # first-order-in-sqrt(dt) transfer error: halving dt shrinks it by about 1/sqrt(2)
    assert 0.55 < np.mean(fine) / np.mean(coarse) < 0.85
    assert np.all(coarse < 0.05)


@given(st.floats(0.01, 0.49), st.floats(0.0, 0.98))
@settings(max_examples=60, deadline=None)
def test_beta_constant_identities(alpha, eta):
    a = 2 * alpha + eta
    if not 0.01 < a < 0.99:
        return
    v = beta_constant(alpha, eta)
    assert v == pytest.approx(special.beta(1 - a, a), rel=1e-10)
    assert v == pytest.approx(beta_constant((1 - a) / 2, 0.0), rel=1e-12)


def test_beta_constant_examples():
    assert beta_constant(0.125, 0.5) == pytest.approx(math.pi * math.sqrt(2), abs=1e-12)
    assert beta_constant(0.25, 0.0) == pytest.approx(math.pi, abs=1e-15)
    ref = integrate.quad(lambda s: 1.0, 0, 1, weight="alg", wvar=(-0.25, -0.75))[0]
    assert abs(beta_constant(0.125, 0.5) - ref) < 1e-6
    for a, e in [(0.5, 0.0), (0.0, 0.0), (0.3, 0.5), (-0.1, 0.1)]:
        with pytest.raises(InvalidArgument):
            beta_constant(a, e)


def test_singular_integral_exact():
    dt = 0.01
    out = singular_integral(np.ones(100), dt, 0.4)
    t = np.arange(101) * dt
    np.testing.assert_allclose(out, t ** 0.6 / 0.6, rtol=1e-12, atol=1e-15)


def test_moment_check_zero_sigma(basis32):
    cfg = ConvolutionConfig(alpha=0.2, zeta=0.2, p=2, dt=1e-2, horizon=0.5)
    # zero spectrum makes the noise term vanish identically
    rep = moment_bound_check(cfg, ModelSpec(), zero_noise(), basis32, np.ones(50), 100, 0)
    assert not rep.lhs.any() and not rep.ratio.any()


def test_moment_check_needs_trials(basis32):
    cfg = ConvolutionConfig(dt=1e-2, horizon=0.5)
    with pytest.raises(InvalidArgument):
        moment_bound_check(cfg, ModelSpec(), TRACE, basis32, np.ones(50), 99, 0)


@pytest.mark.slow
def test_moment_check_isometry_and_trend():
    b = dirichlet_interval_basis(math.pi, 16)
    cfg = ConvolutionConfig(alpha=0.2, zeta=0.2, p=2, dt=1e-3, horizon=1.0)
    model = ModelSpec(diffusion="additive", k2=1.0)
    rep = moment_bound_check(cfg, model, TRACE, b, np.ones(1000), 2000, 3)
    idx = [100, 200, 500, 1000]
    np.testing.assert_allclose(rep.lhs[idx], rep.isometry[idx], rtol=0.1)
    assert np.all(np.isfinite(rep.ratio[idx])) and np.all(rep.ratio[idx] > 0)
    assert rep.log_slope <= 0.1
    # the isometry itself obeys the bound with a t-independent constant
    assert np.all(rep.isometry[1:] <= 1.01 * rep.isometry[1] / rep.rhs[1] * rep.rhs[1:] * 10)


def test_moment_check_cutoff_freezes_rhs(basis32):
    cfg = ConvolutionConfig(alpha=0.2, zeta=0.2, p=2, dt=1e-2, horizon=0.5)
    rep = moment_bound_check(cfg, ModelSpec(), TRACE, basis32, np.full(50, 2.0), 100, 0,
                             cutoff_time=0.2)
    # after tau nothing new enters, but the kernel still shrinks the integral
    assert np.all(np.diff(rep.rhs[25:]) <= 0)


def test_scaling_input_checks(basis32):
    cfg = ConvolutionConfig(alpha=0.45, zeta=0.4, p=5, dt=2 ** -6, horizon=1.0)
    with pytest.raises(InvalidArgument):
        sup_moment_scaling(cfg, TRACE, basis32, 10, [0.25, 0.5, 1.0], 0)
    with pytest.raises(InvalidArgument):
        sup_moment_scaling(cfg, TRACE, basis32, 10, [0.25, 0.5, 0.75, 1.0], 0)
    with pytest.raises(InvalidArgument):
        sup_moment_scaling(cfg, TRACE, basis32, 10, [0.1, 0.2, 0.4, 0.8], 0)


def test_scaling_zero_sigma(basis32):
    cfg = ConvolutionConfig(alpha=0.45, zeta=0.4, p=5, dt=2 ** -6, horizon=1.0)
    fit = sup_moment_scaling(cfg, TRACE, basis32, 20, [1 / 8, 1 / 4, 1 / 2, 1.0], 0, sigma=0.0)
    assert math.isnan(fit.slope)
    assert not fit.moments.any()


@pytest.mark.slow
def test_scaling_slope_and_ci():
    b = dirichlet_interval_basis(math.pi, 16)
    cfg = ConvolutionConfig(alpha=0.45, zeta=0.4, p=5, dt=2 ** -10, horizon=0.5)
    hz = [1 / 16, 1 / 8, 1 / 4, 1 / 2]
    fits = [sup_moment_scaling(cfg, TRACE, b, n, hz, 21) for n in (500, 1000)]
    # for t < 1 the empirical moments decay at least as fast as the bound as t -> 0
    assert fits[1].ci_low >= fits[1].bound_slope
    assert fits[1].prefactor_slope == pytest.approx(5 * (0.45 - 0.2))
    ratio = fits[0].ci_width / fits[1].ci_width
    assert math.sqrt(2) * 0.8 <= ratio <= math.sqrt(2) * 1.2
