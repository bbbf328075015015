import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from srdelab.errors import InvalidArgument
from srdelab.model import ModelSpec, dissipativity_margin, drift_eval, sigma_eval
from srdelab.ode import decay_envelope, exact_solution, table, uniform_bound

# model


def test_drift_examples():
    assert drift_eval(ModelSpec(beta=3), 2.0) == -8.0
    assert drift_eval(ModelSpec(drift="zero"), 7.5) == 0.0
    assert drift_eval(ModelSpec(), 0.0) == 0.0 and drift_eval(ModelSpec(drift="zero"), 0.0) == 0.0


def test_sigma_examples():
    assert sigma_eval(ModelSpec(gamma=2.0), -3.0) == 10.0
    assert sigma_eval(ModelSpec(k2=0.5, diffusion="additive"), 123.0) == 0.5
    assert sigma_eval(ModelSpec(), 0.0) == 1.0


def test_margin_examples():
    m = ModelSpec(beta=3.7, k1=2.3, c0=0.7)
    assert dissipativity_margin(m, np.linspace(-50, 50, 1001)) == 0.0
    z = ModelSpec(drift="zero", beta=3, k1=1.5, c0=2.0)
    assert dissipativity_margin(z, [4.0]) == pytest.approx(1.5 * 4.0 ** 3)
    assert dissipativity_margin(m, [0.1, -0.7, 0.5]) == -math.inf


@pytest.mark.parametrize("kw", [{"beta": 1.0}, {"gamma": -0.1}, {"k1": 0.0}, {"k2": -1.0},
                                {"c0": math.inf}, {"drift": "cubic"}, {"diffusion": "x"}])
def test_model_validation(kw):
    with pytest.raises(InvalidArgument):
        ModelSpec(**kw)


@given(st.floats(1.01, 8), st.floats(0, 4), st.floats(0, 1e3))
def test_parity(beta, gamma, u):
    m = ModelSpec(beta=beta, gamma=gamma)
    assert drift_eval(m, -u) == -drift_eval(m, u)
    assert sigma_eval(m, -u) == sigma_eval(m, u)


def test_drift_monotone():
    u = np.linspace(-20, 20, 4001)
    assert np.all(np.diff(drift_eval(ModelSpec(beta=2.5), u)) <= 0)


# ode


def test_exact_solution_examples():
    assert exact_solution(1.0, 3.0, 0.0) == 1.0
    assert exact_solution(1.0, 3.0, 1.5) == pytest.approx(0.5, rel=1e-15)
    assert exact_solution(-2.0, 2.0, 1.0) == pytest.approx(-2 / 3, rel=1e-15)
    assert exact_solution(0.0, 3.0, 5.0) == 0.0
    with pytest.raises(InvalidArgument):
        exact_solution(1.0, 1.0, 1.0)


@pytest.mark.parametrize("phi0,beta,t", [(1.0, 3.0, 1.5), (-2.0, 2.0, 1.0), (100.0, 5.0, 0.3)])
def test_exact_solution_numeric_oracle(phi0, beta, t):
    sol = solve_ivp(lambda s, y: -np.abs(y) ** (beta - 1) * y, (0, t), [phi0],
                    method="DOP853", rtol=1e-13, atol=1e-14)
    assert exact_solution(phi0, beta, t) == pytest.approx(sol.y[0, -1], rel=1e-8)


@given(st.floats(-1e6, 1e6), st.floats(1.05, 8), st.floats(0, 10), st.floats(0, 10))
@settings(max_examples=200)
def test_semiflow(phi0, beta, s, t):
    a = exact_solution(exact_solution(phi0, beta, s), beta, t)
    b = exact_solution(phi0, beta, s + t)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


@given(st.floats(-1e6, 1e6), st.floats(1.05, 8), st.floats(0, 10), st.floats(0, 10))
def test_odd_and_decreasing(phi0, beta, s, t):
    assert exact_solution(-phi0, beta, t) == -exact_solution(phi0, beta, t)
    lo, hi = sorted((s, t))
    assert abs(exact_solution(phi0, beta, hi)) <= abs(exact_solution(phi0, beta, lo))


def test_envelope_examples():
    assert decay_envelope(7.0, 3.0, 1.0, 0.0) == pytest.approx(10.5)
    assert decay_envelope(1.0, 3.0, 1.0, 16.0) == pytest.approx(1.5 / math.sqrt(2), rel=1e-14)
    assert decay_envelope(math.inf, 3.0, 1.0, 2.0) == pytest.approx(uniform_bound(3.0, 1.0, 2.0))
    with pytest.raises(InvalidArgument):
        decay_envelope(0.0, 3.0, 1.0, 1.0)
    with pytest.raises(InvalidArgument):
        uniform_bound(3.0, 1.0, 0.0)


def _comparison(u0, beta, rate, t):
    sol = solve_ivp(lambda s, y: -rate * y ** beta, (0, t), [u0], method="DOP853",
                    rtol=1e-12, atol=1e-14)
    return sol.y[0, -1]


def test_envelope_is_three_halves_of_its_comparison_ode():
    # the closed form solves v' = -k1 / (2^beta (beta-1)^2) v^beta, times 3/2
    for beta, k1, u0, t in [(3.0, 1.0, 1.0, 16.0), (5.0, 2.0, 10.0, 3.0), (1.5, 1.0, 2.0, 4.0)]:
        v = _comparison(u0, beta, k1 / (2 ** beta * (beta - 1) ** 2), t)
        assert decay_envelope(u0, beta, k1, t) == pytest.approx(1.5 * v, rel=1e-9)


@pytest.mark.parametrize("beta", [2.0, 3.0, 6.0])
def test_envelope_dominates_rate_k1_over_2_beta_flow(beta):
    # for beta >= 2 the closed form is at least the flow of v' = -(k1/2^beta) v^beta
    for u0, t in [(1.0, 16.0), (1e3, 0.5), (5.0, 2.0)]:
        ref = 1.5 * _comparison(u0, beta, 1 / 2 ** beta, t)
        assert decay_envelope(u0, beta, 1.0, t) >= ref * (1 - 1e-9)


@given(st.floats(1e-3, 1e6), st.floats(1.05, 8), st.floats(0.01, 10), st.floats(1e-3, 100))
def test_envelope_properties(u0, beta, k1, t):
    e = decay_envelope(u0, beta, k1, t)
    assert e <= 1.5 * u0 * (1 + 1e-12)
    assert e <= uniform_bound(beta, k1, t) * (1 + 1e-12)
    assert decay_envelope(u0, beta, k1, 2 * t) <= e
    assert decay_envelope(2 * u0, beta, k1, t) >= e


def test_uniform_bound_scaling():
    t = np.geomspace(0.1, 10, 7)
    slope = np.polyfit(np.log(t), np.log(uniform_bound(3.0, 1.0, t)), 1)[0]
    assert slope == pytest.approx(-0.5, abs=1e-12)
    for beta in (2.0, 3.0, 5.0):
        r = uniform_bound(beta, 1.0, 2.0) / uniform_bound(beta, 1.0, 1.0)
        assert r == pytest.approx(2 ** (-1 / (beta - 1)), rel=1e-14)
    assert np.all(np.diff(uniform_bound(4.0, 2.0, t)) < 0)


def test_table_rows():
    rows = table(3.0, 2.0, 10.0, [0.0, 1.0])
    assert rows[0] == (0.0, 10.0, 15.0, math.inf)
    assert rows[1][1] == pytest.approx(exact_solution(10.0, 3.0, 2.0))
