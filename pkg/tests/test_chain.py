import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import probe_grid, random_generator
from regime_mdp.chain import (gamma_of_constant_rates, gamma_of_controlled_rates, invariant_measure,
                              is_irreducible, occupation_fractions)
from regime_mdp.errors import NotIrreducible
from regime_mdp.model import build_builtin
from regime_mdp.simulate import simulate_coupled


def power_iteration_mu(Q, iters=20000):
    """Stationary law of the uniformized transition matrix, by iteration."""
    rate = np.abs(np.diag(Q)).max() * 1.5
    P = np.eye(Q.shape[0]) + Q / rate
    p = np.full(Q.shape[0], 1.0 / Q.shape[0])
    for _ in range(iters):
        p = p @ P
    return p / p.sum()


def test_symmetric_generator():
    np.testing.assert_allclose(invariant_measure([[-1.0, 1.0], [1.0, -1.0]]).mu, [0.5, 0.5], atol=1e-15)


def test_two_state_hand_solution():
    im = invariant_measure([[-1.0, 1.0], [2.0, -2.0]])
    np.testing.assert_allclose(im.mu, [2 / 3, 1 / 3], atol=1e-15)
    assert im.residual < 1e-15


def test_random_five_state_against_power_iteration():
    Q = random_generator(np.random.default_rng(5), 5)
    im = invariant_measure(Q)
    assert np.abs(im.mu @ Q).max() < 1e-10
    assert abs(im.mu.sum() - 1) < 1e-12
    np.testing.assert_allclose(im.mu, power_iteration_mu(Q), atol=1e-10)


@given(L=st.integers(2, 8), seed=st.integers(0, 2 ** 32 - 1))
def test_invariant_measure_properties(L, seed):
    Q = random_generator(np.random.default_rng(seed), L)
    im = invariant_measure(Q)
    assert np.abs(im.mu @ Q).max() < 1e-10
    assert abs(im.mu.sum() - 1) < 1e-12
    assert im.mu.min() > 0


def test_zoo_residuals_on_grid(zoo_model):
    for x in probe_grid(zoo_model):
        assert invariant_measure(zoo_model.generator(x)).residual < 1e-10


def test_reducible_chain_raises():
    Q = np.array([[0.0, 0.0], [1.0, -1.0]])
    assert not is_irreducible(Q)
    with pytest.raises(NotIrreducible):
        invariant_measure(Q)


def test_two_disconnected_blocks_raise():
    Q = np.zeros((4, 4))
    Q[0, 1] = Q[1, 0] = Q[2, 3] = Q[3, 2] = 1.0
    np.fill_diagonal(Q, -Q.sum(axis=1))
    with pytest.raises(NotIrreducible):
        invariant_measure(Q)


def test_gamma_constant_rates_is_generator():
    Q = np.array([[-1.0, 1.0], [2.0, -2.0]])
    assert np.array_equal(gamma_of_constant_rates(Q).gamma, Q)


def test_gamma_zero_off_support():
    Q = np.array([[-1.0, 1.0, 0.0], [0.0, -2.0, 2.0], [3.0, 0.0, -3.0]])
    G = gamma_of_constant_rates(Q).gamma
    assert G[0, 2] == 0 and G[1, 0] == 0 and G[2, 1] == 0
    np.testing.assert_allclose(G.sum(axis=1), 0, atol=1e-12)


def test_gamma_controlled_examples():
    Q = np.array([[-1.0, 1.0], [2.0, -2.0]])
    assert np.array_equal(gamma_of_controlled_rates(Q, np.ones((2, 2))).gamma, Q)
    assert not np.any(gamma_of_controlled_rates(Q, np.zeros((2, 2))).gamma)
    c = np.array([[0.0, 2.0], [0.5, 0.0]])
    np.testing.assert_array_equal(gamma_of_controlled_rates(Q, c).gamma, [[-2.0, 2.0], [1.0, -1.0]])


@given(L=st.integers(2, 6), seed=st.integers(0, 2 ** 32 - 1))
def test_gamma_controlled_additive_off_diagonal(L, seed):
    rng = np.random.default_rng(seed)
    Q = random_generator(rng, L)
    c1, c2 = rng.uniform(0, 2, size=(2, L, L))
    g = gamma_of_controlled_rates(Q, c1 + c2).gamma
    g12 = gamma_of_controlled_rates(Q, c1).gamma + gamma_of_controlled_rates(Q, c2).gamma
    off = ~np.eye(L, dtype=bool)
    np.testing.assert_allclose(g[off], g12[off], rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(g.sum(axis=1), 0, atol=1e-12)
    assert np.all(g[off] >= 0)


def test_occupation_fractions_counts():
    np.testing.assert_allclose(occupation_fractions(np.array([1, 1, 2, 1]), 2), [0.75, 0.25])


def test_long_run_occupation_matches_mu():
    m = build_builtin("two-state-constant", {"sigma": 0.0, "b1": 0.0, "b2": 0.0})
    path = simulate_coupled(m, 1.0, [0.0], 1, 1e4, 0.01, seed=42)
    frac = occupation_fractions(path.y, 2)[0]
    # Occupation of a two-state chain: asymptotic variance 2 mu1 mu2 / ((q12 + q21) T).
    se = np.sqrt(2 * (2 / 3) * (1 / 3) / (3.0 * 1e4))
    assert abs(frac - 2 / 3) < 3 * se
