import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from medcross.domain import Effect, MediatorKind
from medcross.synth import (
    DEFAULT_ALPHA,
    TRUE_EFFECTS,
    Case,
    OracleNuisance,
    ScenarioMismatch,
    ScenarioSpec,
    UnsupportedDimension,
    generate,
    oracle_nuisance_fit,
    relevant_dim,
)


def test_same_seed_gives_identical_tables():
    spec = ScenarioSpec(Case.CASE1, 10_000, 5, seed=11)
    a, _ = generate(spec)
    b, _ = generate(spec)
    for col in ("x", "d", "m", "y"):
        np.testing.assert_array_equal(getattr(a, col), getattr(b, col))
    assert a.mediator_kind is MediatorKind.CONTINUOUS


def test_different_seeds_differ():
    a, _ = generate(ScenarioSpec(Case.CASE2, 200, seed=1))
    b, _ = generate(ScenarioSpec(Case.CASE2, 200, seed=2))
    assert not np.array_equal(a.y, b.y)


@pytest.mark.parametrize("case", list(Case))
def test_truths(case):
    _, oracle = generate(ScenarioSpec(case, 100))
    assert oracle.truth[Effect.TOTAL] == 0.4
    assert all(oracle.truth[e] == 0.2 for e in (Effect.NDE0, Effect.NDE1, Effect.NIE0, Effect.NIE1))


@pytest.mark.parametrize("case", list(Case))
def test_quadrature_phi_reproduces_truths(case):
    oracle = OracleNuisance(case, 5, ScenarioSpec(case, 100).alpha)
    phi = {(d, dp): oracle.phi(d, dp, log2_points=12) for d in (0, 1) for dp in (0, 1)}
    assert phi[1, 1] - phi[0, 0] == pytest.approx(TRUE_EFFECTS[Effect.TOTAL], abs=1e-12)
    assert phi[1, 0] - phi[0, 0] == pytest.approx(0.2, abs=1e-12)


def test_outcome_noise_is_centred_case1():
    table, oracle = generate(ScenarioSpec(Case.CASE1, 1_000_000, seed=3))
    _, _, yx = oracle.mean_functions(table.x)
    resid = table.y - table.m - 0.2 * table.d - yx
    assert abs(resid.mean()) < 3e-3


def test_mediator_noise_is_centred_case2():
    table, oracle = generate(ScenarioSpec(Case.CASE2, 200_000, seed=4))
    _, mx, _ = oracle.mean_functions(table.x)
    resid = table.m - 0.2 * table.d - mx
    assert abs(resid.mean()) < 3 / np.sqrt(len(resid))
    assert resid.std() == pytest.approx(1.0, abs=0.01)


def test_oracle_at_origin_case1():
    oracle = OracleNuisance(Case.CASE1)
    x0 = np.zeros((1, 5))
    assert oracle.propensity(x0)[0] == 0.5
    assert oracle.cross_regression(x0, 1, 0)[0] == pytest.approx(0.2, abs=1e-15)


def test_cross_regression_matches_simulation(rng):
    oracle = OracleNuisance(Case.CASE1)
    x = rng.uniform(-1, 1, (1, 5))
    _, mx, _ = oracle.mean_functions(x)
    m = 0.2 * 0 + mx[0] + rng.standard_normal(100_000)
    draws = oracle.outcome_regression(np.repeat(x, len(m), axis=0), 1, m)
    se = draws.std() / np.sqrt(len(draws))
    assert abs(draws.mean() - oracle.cross_regression(x, 1, 0)[0]) < 3 * se


@given(st.integers(0, 2 ** 31), st.sampled_from(list(Case)))
def test_irrelevant_covariates_do_not_move_d_m_y(seed, case):
    small, _ = generate(ScenarioSpec(case, 100, relevant_dim(case), seed=seed))
    big, _ = generate(ScenarioSpec(case, 100, 100, seed=seed))
    k = relevant_dim(case)
    np.testing.assert_array_equal(small.x[:, :k], big.x[:, :k])
    for col in ("d", "m", "y"):
        np.testing.assert_array_equal(getattr(small, col), getattr(big, col))
    assert np.all(np.abs(big.x) <= 1.0)


def test_propensity_interior_case1(rng):
    x = rng.uniform(-1, 1, (1_000_000, 5))
    a = OracleNuisance(Case.CASE1).propensity(x)
    assert a.min() >= 0.05 and a.max() <= 0.95


@pytest.mark.parametrize("case", list(Case))
def test_mediator_density_integrates_to_one(case, rng):
    oracle = OracleNuisance(case, 5, ScenarioSpec(case, 100).alpha)
    nodes, weights = np.polynomial.hermite_e.hermegauss(60)
    x = rng.uniform(-1, 1, (3, 5))
    _, mx, _ = oracle.mean_functions(x)
    for row in range(3):
        for d in (0, 1):
            centre = 0.2 * d + mx[row]
            # integrate f(m) = pdf(m - centre) with the probabilists' Hermite rule
            m = centre + nodes
            vals = oracle.mediator_density(m, np.repeat(x[row:row + 1], len(m), axis=0), d)
            integral = np.sum(weights * vals / np.exp(-nodes ** 2 / 2))
            assert integral == pytest.approx(1.0, abs=1e-8)


def test_propensity_given_mediator_is_bayes(rng):
    oracle = OracleNuisance(Case.CASE2)
    x = rng.uniform(-1, 1, (50, 5))
    m = rng.normal(size=50)
    a1 = oracle.propensity(x)
    f1 = oracle.mediator_density(m, x, 1)
    f0 = oracle.mediator_density(m, x, 0)
    bayes = a1 * f1 / (a1 * f1 + (1 - a1) * f0)
    np.testing.assert_allclose(oracle.propensity_given_mediator(x, m), bayes, rtol=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(Case.CASE1, 99)
    with pytest.raises(UnsupportedDimension):
        ScenarioSpec(Case.CASE1, 100, p=4)
    ScenarioSpec(Case.CASE5, 100, p=3)
    with pytest.raises(ValueError):
        ScenarioSpec(6, 100)


def test_alpha_defaults():
    assert ScenarioSpec(Case.CASE3, 100).alpha == 1.2
    assert ScenarioSpec(Case.CASE4, 100).alpha == 0.6
    assert ScenarioSpec(Case.CASE5, 100).alpha == 1.5
    assert ScenarioSpec(Case.CASE1, 100).alpha is None
    assert ScenarioSpec(Case.CASE3, 100, alpha=0.9).alpha == 0.9
    assert set(DEFAULT_ALPHA) == {Case.CASE3, Case.CASE4, Case.CASE5}


@pytest.mark.parametrize("case", list(Case))
def test_generated_values_are_finite(case):
    table, _ = generate(ScenarioSpec(case, 500, seed=9))
    assert all(np.all(np.isfinite(getattr(table, c))) for c in ("x", "d", "m", "y"))
    assert set(np.unique(table.d)) == {0.0, 1.0}


def test_oracle_fit_closed_forms():
    table, oracle = generate(ScenarioSpec(Case.CASE1, 300, seed=5))
    fit = oracle_nuisance_fit(table, oracle)
    _, mx, yx = oracle.mean_functions(table.x)
    np.testing.assert_allclose(fit.cross_mu[:, 1, 0], 0.2 + mx + yx)
    np.testing.assert_allclose(fit.mu_d1 - fit.mu_d0, 0.2)
    assert fit.mediator_kind is MediatorKind.CONTINUOUS


def test_oracle_fit_dimension_mismatch():
    table, _ = generate(ScenarioSpec(Case.CASE1, 100, p=6))
    with pytest.raises(ScenarioMismatch):
        oracle_nuisance_fit(table, OracleNuisance(Case.CASE1, 5))


def test_mediator_density_is_standard_normal_shift():
    oracle = OracleNuisance(Case.CASE1)
    x = np.zeros((1, 5))
    assert oracle.mediator_density(0.2, x, 1)[0] == pytest.approx(stats.norm.pdf(0.0))
