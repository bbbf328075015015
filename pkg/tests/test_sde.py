import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srdelab.errors import InvalidArgument
from srdelab.harness import persist_results
from srdelab.ode import exact_solution
from srdelab.rng import derive_seed
from srdelab.sde import (SdeConfig, ito_condition, moment_estimate, run_sde_trials, sde_step,
                         simulate_sde_path)


def test_ito_condition_examples():
    assert ito_condition(3, 1.9)
    assert not ito_condition(3, 2.0)
    assert ito_condition(5, 2.5)


def test_step_examples():
    cfg = SdeConfig(dimension=2, dt=0.01, scheme="euler_maruyama")
    np.testing.assert_array_equal(sde_step([0.0, 0.0], cfg, [0.0, 0.0]), [0.0, 0.0])
    np.testing.assert_allclose(sde_step([2.0, 0.0], cfg, [0.0, 0.0]), [1.92, 0.0], rtol=1e-15)


def test_step_propagates_nonfinite():
    out = sde_step([math.nan], SdeConfig(), [0.0])
    assert not np.all(np.isfinite(out))


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(1.1, 6), st.sampled_from([1e-2, 1e-3, 1e-4]))
@settings(max_examples=200)
def test_tamed_vs_untamed_relative_gap(x, y, beta, dt):
    em = SdeConfig(dimension=2, beta=beta, dt=dt, scheme="euler_maruyama")
    te = SdeConfig(dimension=2, beta=beta, dt=dt, scheme="tamed_euler")
    s = np.array([x, y])
    norm = float(np.hypot(x, y))
    if norm == 0:
        return
    f = norm ** (beta - 1) * norm
    d_em = sde_step(s, em, [0.0, 0.0]) - s
    d_te = sde_step(s, te, [0.0, 0.0]) - s
    gap = np.linalg.norm(d_em - d_te)
    assert gap <= dt * f * np.linalg.norm(d_em) * (1 + 1e-9) + 1e-12


def test_tamed_growth_bound():
    cfg = SdeConfig(dimension=2, beta=4.0, gamma=2.5, dt=1e-2, exit_radius=1e12)
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.normal(scale=30, size=2)
        for _ in range(50):
            db = rng.normal(scale=0.1, size=2)
            nxt = sde_step(x, cfg, db)
            if not np.linalg.norm(nxt) < 1e100:
                break
            g = (1 + np.linalg.norm(x)) ** cfg.gamma * np.linalg.norm(db)
            assert np.linalg.norm(nxt) <= (np.linalg.norm(x) + g + 1) * (1 + 1e-12)
            x = nxt


def test_config_validation():
    with pytest.raises(InvalidArgument):
        SdeConfig(dt=1.0, horizon=1.0)
    with pytest.raises(InvalidArgument):
        SdeConfig(x0=(5.0,), exit_radius=4.0)
    with pytest.raises(InvalidArgument):
        SdeConfig(dimension=2, x0=(1.0,))
    with pytest.raises(InvalidArgument):
        SdeConfig(scheme="milstein")


def test_determinism():
    cfg = SdeConfig(dimension=3, gamma=1.8)
    a, b = simulate_sde_path(cfg, 99), simulate_sde_path(cfg, 99)
    np.testing.assert_array_equal(a.path, b.path)
    assert a.exit_time == b.exit_time


def test_degenerate_config_is_brownian():
    # drift off and gamma = 0: X is sqrt(dt) times the cumulative sum of the stream
    cfg = SdeConfig(dimension=2, gamma=0.0, drift_coeff=0.0, dt=1e-3, horizon=0.5, exit_radius=1e9)
    p = simulate_sde_path(cfg, 5)
    z = np.random.default_rng(5).standard_normal((cfg.num_steps, 2))
    np.testing.assert_allclose(p.path[1:], np.cumsum(z * math.sqrt(1e-3), axis=0), atol=1e-12)


def test_exit_is_first_grid_time_outside():
    cfg = SdeConfig(beta=2.0, gamma=2.0, dt=1e-2, horizon=2.0, exit_radius=3.0,
                    scheme="euler_maruyama")
    p = simulate_sde_path(cfg, 11)
    norms = np.abs(p.path[:, 0])
    k = int(round(p.exit_time / cfg.dt))
    if p.exit_reason == "radius":
        assert norms[k] > 3.0 and np.all(norms[:k] <= 3.0)
    else:
        assert np.all(norms <= 3.0)


def test_rotation_invariance():
    cfg = SdeConfig(dimension=2, beta=3.0, gamma=1.2, dt=1e-3, horizon=0.2)
    th = 0.7
    q = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    a, b = [], []
    for i in range(300):
        rng = np.random.default_rng(derive_seed(1, i))
        x = y = np.zeros(2)
        for _ in range(cfg.num_steps):
            db = rng.normal(scale=math.sqrt(cfg.dt), size=2)
            x, y = sde_step(x, cfg, db), sde_step(y, cfg, q @ db)
        a.append(np.linalg.norm(x))
        b.append(np.linalg.norm(y))
    a, b = np.array(a), np.array(b)
    for m in (1, 2):
        se = np.std(a ** m) / math.sqrt(a.size)
        assert abs(np.mean(a ** m) - np.mean(b ** m)) <= 3 * se
    np.testing.assert_allclose(a, b, rtol=1e-9)


@pytest.mark.parametrize("scheme,min_order", [("euler_maruyama", 1.0), ("tamed_euler", 0.95)])
def test_deterministic_convergence(scheme, min_order):
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        cfg = SdeConfig(x0=(2.0,), dt=dt, noise_coeff=0.0, scheme=scheme)
        p = simulate_sde_path(cfg, 0)
        errs.append(abs(p.path[-1, 0] - exact_solution(2.0, 3.0, 1.0)))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= min_order
    if scheme == "tamed_euler":
        assert orders[1] > orders[0]


def test_moment_estimate_needs_100_trials():
    with pytest.raises(InvalidArgument):
        moment_estimate(SdeConfig(), 99, 0)


def test_trials_are_batch_independent():
    cfg = SdeConfig(gamma=1.9, horizon=0.3)
    a = run_sde_trials(cfg, 30, 4, batch_size=7)
    b = run_sde_trials(cfg, 30, 4, batch_size=30)
    assert [(t.seed, t.exit_time, t.final_norm_sq) for t in a] == \
        [(t.seed, t.exit_time, t.final_norm_sq) for t in b]


def test_trial_csv(tmp_path):
    trials = run_sde_trials(SdeConfig(horizon=0.1), 5, 1)
    path = tmp_path / "sde.csv"
    persist_results(trials, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "trial,seed,exit_time,exit_reason,final_norm_sq"
    assert len(lines) == 6 and lines[1].split(",")[3] == "horizon"
