import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from olt.optimizers import (
    CemConfig,
    GpoConfig,
    IllConditionedModelError,
    OnePlusOneConfig,
    OptimizationAborted,
    SearchSpace,
    cem_maximize,
    evaluate_batch,
    expected_improvement,
    gp_posterior,
    gpo_maximize,
    one_plus_one_maximize,
    se_kernel,
)

TARGET = np.array([0.5, -0.3])


def quadratic(x):
    return -float(np.sum((np.asarray(x) - TARGET) ** 2))


def sphere(x):
    return -float(np.sum(np.asarray(x) ** 2))


def bowl_1d(x):
    return -float((x[0] - 0.3) ** 2)


def assert_run_consistent(run, space):
    best = [row.best_J for row in run.trace]
    assert best == sorted(best)
    assert run.best_value == max(run.values)
    k = run.values.index(run.best_value)
    assert np.array_equal(run.points[k], run.best_x)
    assert run.trace[-1].evals == run.evaluations
    pts = np.array(run.points)
    assert np.all(pts >= space.lower) and np.all(pts <= space.upper)


# -- CEM ---------------------------------------------------------------------

def test_cem_finds_quadratic_optimum():
    space = SearchSpace.cube(2, -1, 1)
    run = cem_maximize(quadratic, space, CemConfig(iterations=50), seed=0)
    assert np.linalg.norm(run.best_x - TARGET) < 1e-2
    assert run.evaluations == 32 * 50
    assert_run_consistent(run, space)


def test_cem_deterministic_given_seed():
    space = SearchSpace.cube(2, -1, 1)
    a = cem_maximize(quadratic, space, CemConfig(iterations=5), seed=3)
    b = cem_maximize(quadratic, space, CemConfig(iterations=5), seed=3)
    assert a.to_csv(include_wallclock=False) == b.to_csv(include_wallclock=False)
    assert np.array_equal(np.array(a.points), np.array(b.points))


def test_cem_constant_objective():
    space = SearchSpace.cube(2, -1, 1)
    run = cem_maximize(lambda x: 4.2, space, CemConfig(iterations=10), seed=1)
    assert run.best_value == 4.2
    # elites are the first K samples: mean drifts only by sampling noise
    last = np.array(run.points[-32:])
    assert np.all(np.abs(last.mean(axis=0) - space.center) < space.width / 4)


def test_cem_all_elites_uses_population_statistics():
    space = SearchSpace.cube(1, -1, 1)
    cfg = CemConfig(population=6, elites=6, smoothing=1.0, iterations=2)
    run = cem_maximize(lambda x: float(x[0]), space, cfg, seed=0)
    first = np.array(run.points[:6])
    second = np.array(run.points[6:])
    rng = np.random.default_rng(0)
    rng.standard_normal((6, 1))
    expected = np.clip(first.mean(0) + first.std(0) * rng.standard_normal((6, 1)), -1, 1)
    assert np.allclose(second, expected, rtol=0, atol=1e-15)


def test_cem_non_finite_values_never_elite():
    space = SearchSpace.cube(1, -1, 1)
    run = cem_maximize(lambda x: math.nan if x[0] > 0 else float(x[0]), space,
                       CemConfig(iterations=5), seed=0)
    assert run.best_x[0] <= 0
    assert all(v == -math.inf or v <= 0 for v in run.values)


def test_cem_all_non_finite_aborts_with_partial_run():
    with pytest.raises(OptimizationAborted) as info:
        cem_maximize(lambda x: math.inf, SearchSpace.cube(2), CemConfig(iterations=3), seed=0)
    assert info.value.run.evaluations == 32


def test_cem_injects_initial_points():
    space = SearchSpace.cube(2)
    run = cem_maximize(sphere, space, CemConfig(iterations=1), seed=0,
                       initial_points=[[0.0, 0.0], [1.0, 2.0]])
    assert run.points[0].tolist() == [0.0, 0.0] and run.points[1].tolist() == [1.0, 2.0]
    assert run.best_value == 0.0


def test_cem_config_validation():
    with pytest.raises(ValueError):
        CemConfig(population=4, elites=5)
    with pytest.raises(ValueError):
        CemConfig(smoothing=0.0)


# -- (1+1)-ES ----------------------------------------------------------------

def test_one_plus_one_sphere():
    space = SearchSpace.cube(2, -2, 2)
    run = one_plus_one_maximize(sphere, space, OnePlusOneConfig(max_evaluations=2000),
                                seed=0, x0=[1.0, 1.0])
    assert np.linalg.norm(run.best_x) < 1e-2
    assert run.evaluations == 2000
    assert run.points[0].tolist() == [1.0, 1.0]
    assert_run_consistent(run, space)


def test_one_plus_one_step_size_rule():
    space = SearchSpace.cube(2, -2, 2)
    run = one_plus_one_maximize(sphere, space, OnePlusOneConfig(max_evaluations=200), seed=2,
                                x0=[1.0, 1.0])
    best = run.values[0]
    for i, y in enumerate(run.values[1:], 1):
        ratio = run.step_sizes[i] / run.step_sizes[i - 1]
        if y > best:
            assert ratio == pytest.approx(1.5)
            best = y
        else:
            assert ratio == pytest.approx(0.82)


def test_one_plus_one_never_leaves_start_if_nothing_better():
    start = np.array([0.25, -0.5])
    f = lambda x: 1.0 if np.array_equal(x, start) else -math.inf  # noqa: E731
    run = one_plus_one_maximize(f, SearchSpace.cube(2), OnePlusOneConfig(max_evaluations=50),
                                seed=0, x0=start)
    assert np.array_equal(run.best_x, start) and run.best_value == 1.0
    assert all(s > 0 for s in run.step_sizes)


# -- GP regression -----------------------------------------------------------

def dense_posterior(X, y, Q, sf, ell, sn):
    """Reference posterior with a plain dense solve (no Cholesky)."""
    ym, ys = y.mean(), y.std()
    z = (y - ym) / ys
    K = se_kernel(X, X, sf, ell) + sn**2 * np.eye(len(X))
    Ks = se_kernel(X, Q, sf, ell)
    mu = Ks.T @ np.linalg.solve(K, z)
    var = sf**2 - np.einsum("ij,ij->j", Ks, np.linalg.solve(K, Ks))
    return mu * ys + ym, np.sqrt(np.maximum(var, 0)) * ys


def test_gp_interpolates_observations():
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 1, size=(8, 2))
    y = np.sin(3 * X[:, 0]) + X[:, 1]
    mu, sd = gp_posterior(X, y, X, length_scale=0.3, noise_std=1e-12)
    assert np.max(np.abs(mu - y)) < 1e-6
    assert np.all(sd < 1e-3)


def test_gp_reverts_to_prior_far_away():
    rng = np.random.default_rng(1)
    X = rng.uniform(0, 1, size=(10, 1))
    y = 3 * X[:, 0] ** 2 - 1
    ell = 0.2
    mu, sd = gp_posterior(X, y, [[1 + 10 * ell]], length_scale=ell)
    assert abs(mu[0] - y.mean()) < 1e-3 * y.std()
    assert sd[0] / y.std() == pytest.approx(1.0, abs=1e-6)


def test_gp_symmetric_data_gives_symmetric_mean():
    X = np.array([[-0.8], [-0.3], [0.0], [0.3], [0.8]])
    y = X[:, 0] ** 2
    q = np.linspace(0.05, 1.0, 12)[:, None]
    mu_pos, _ = gp_posterior(X, y, q, length_scale=0.4)
    mu_neg, _ = gp_posterior(X, y, -q, length_scale=0.4)
    assert np.max(np.abs(mu_pos - mu_neg)) < 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_gp_matches_dense_solve(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(20, 3))
    y = rng.normal(size=20) + X @ [1.0, -2.0, 0.5]
    Q = rng.uniform(-1, 1, size=(50, 3))
    ell = 0.2 * np.linalg.norm([2, 2, 2])
    mu, sd = gp_posterior(X, y, Q, length_scale=ell, noise_std=1e-4)
    mu_ref, sd_ref = dense_posterior(X, y, Q, 1.0, ell, 1e-4)
    assert np.max(np.abs(mu - mu_ref)) < 1e-8
    assert np.max(np.abs(sd - sd_ref)) < 1e-8


def test_gp_variance_never_negative():
    rng = np.random.default_rng(4)
    X = rng.uniform(0, 1, size=(15, 2))
    _, sd = gp_posterior(X, rng.normal(size=15), rng.uniform(-0.5, 1.5, size=(500, 2)),
                         length_scale=0.5)
    assert np.all(sd >= 0)


def test_gp_duplicate_points_need_jitter_escalation():
    X = np.zeros((4, 1))
    mu, _ = gp_posterior(X, [1.0, 1.0, 1.0, 1.0], [[0.0]], noise_std=0.0)
    assert mu[0] == pytest.approx(1.0)


def test_gp_ill_conditioned_error():
    from olt.optimizers import _cholesky

    # no jitter up to 1e-4 can make a negative-definite matrix factorizable
    with pytest.raises(IllConditionedModelError):
        _cholesky(-np.eye(3), 0.0)


# -- expected improvement ----------------------------------------------------

def ei_by_quadrature(mu, sigma, best, xi):
    f = lambda y: max(0.0, y - best - xi) * norm.pdf(y, mu, sigma)  # noqa: E731
    lo = best + xi
    return integrate.quad(f, lo, mu + 40 * sigma, epsabs=1e-13, epsrel=1e-12, limit=200)[0]


def test_ei_at_zero_gap():
    assert expected_improvement(0.0, 1.0, 0.0, 0.0) == pytest.approx(0.3989422804, abs=1e-9)


def test_ei_degenerate_sigma():
    assert expected_improvement(1.0, 0.0, 1.0, 0.01) == 0.0
    assert expected_improvement(0.5, 0.0, 1.0, 0.0) == 0.0
    assert expected_improvement(2.0, 0.0, 1.0, 0.5) == pytest.approx(0.5)


@pytest.mark.parametrize("mu,sigma,best,xi", [
    (0.0, 1.0, 0.0, 0.01), (1.3, 0.4, 1.0, 0.0), (-2.0, 0.7, 0.5, 0.1), (3.0, 2.0, 0.0, 0.01),
])
def test_ei_matches_quadrature(mu, sigma, best, xi):
    assert expected_improvement(mu, sigma, best, xi) == pytest.approx(
        ei_by_quadrature(mu, sigma, best, xi), abs=1e-9)


def test_ei_monotone_in_sigma_below_incumbent():
    sig = np.linspace(0, 5, 401)
    for mu in (-2.0, -0.5, 0.0):
        ei = expected_improvement(np.full_like(sig, mu), sig, 0.0, 0.01)
        assert np.all(np.diff(ei) >= -1e-15)


# -- GPO ---------------------------------------------------------------------

def test_gpo_1d_quadratic():
    space = SearchSpace([0.0], [1.0])
    run = gpo_maximize(bowl_1d, space, GpoConfig(budget=30), seed=0)
    assert abs(run.best_x[0] - 0.3) < 0.05
    assert run.evaluations == 30
    assert_run_consistent(run, space)


def test_gpo_budget_equal_to_design_is_random_search():
    space = SearchSpace.cube(2, -1, 1)
    run = gpo_maximize(quadratic, space, GpoConfig(budget=6), seed=4)
    assert run.evaluations == 6 and len(run.trace) == 1
    expected = space.uniform(np.random.default_rng(4), 6)
    assert np.array_equal(np.array(run.points), expected)
    with pytest.raises(ValueError):
        gpo_maximize(quadratic, space, GpoConfig(budget=5), seed=0)


def test_gpo_flat_objective_picks_max_sigma_candidate():
    space = SearchSpace([0.0], [1.0])
    cfg = GpoConfig(budget=5, candidates=256)
    run = gpo_maximize(lambda x: 1.0, space, cfg, seed=9)
    rng = np.random.default_rng(9)
    X = space.uniform(rng, 4)
    cand = space.uniform(rng, 256)
    _, sd = gp_posterior(X, np.ones(4), cand, length_scale=cfg.scale(space))
    assert np.array_equal(run.points[4], cand[int(np.argmax(sd))])


def test_gpo_injected_design_points():
    space = SearchSpace.cube(2)
    run = gpo_maximize(sphere, space, GpoConfig(budget=6), seed=0, initial_points=[[0, 0]])
    assert run.points[0].tolist() == [0.0, 0.0] and run.best_value == 0.0


def test_parallel_batch_matches_serial():
    xs = np.random.default_rng(0).uniform(-1, 1, size=(9, 2))
    assert evaluate_batch(quadratic, xs, workers=3) == evaluate_batch(quadratic, xs, workers=1)


def test_search_space_validation():
    with pytest.raises(ValueError):
        SearchSpace([0.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        SearchSpace([0.0], [1.0, 2.0])


def test_run_serialization():
    run = cem_maximize(quadratic, SearchSpace.cube(2, -1, 1), CemConfig(iterations=2), seed=0)
    lines = run.to_csv().splitlines()
    assert lines[0] == "iteration,best_J,mean_J,evals,wallclock_ms"
    assert len(lines) == 3
    assert run.to_csv(include_wallclock=False).splitlines()[0] == "iteration,best_J,mean_J,evals"
    blob = run.to_dict()
    assert blob["evaluations"] == 64 and len(blob["trace"]) == 2
