import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad_vec
from scipy.linalg import expm

from conftest import probe_grid, random_model
from regime_mdp.model import affine_tanh_model, build_builtin
from regime_mdp.poisson import (analyze_point, averaged_drift, default_h_fd, effective_covariance,
                                jacobian_bbar, solve_poisson)


def phi_by_quadrature(model, x):
    """Phi(x, i) = int_0^inf E[b(x, Y_t^i) - bbar(x)] dt via matrix exponentials."""
    Q = model.generator(x)
    centred = model.drift_matrix(x) - averaged_drift(model, x)
    mu = solve_poisson(model, x).mu
    limit = np.outer(np.ones(model.L), mu)
    # The integrand decays like exp(-gap t); integrate until it is far below tolerance.
    gap = np.sort(-np.linalg.eigvals(Q).real)[1]
    horizon = 40.0 / gap
    val, _ = quad_vec(lambda t: (expm(Q * t) - limit) @ centred, 0.0, horizon, epsabs=1e-12, epsrel=1e-12)
    return val


def test_two_state_averaged_drift_vanishes(ref_model):
    for x in (-2.0, 0.0, 3.5):
        assert abs(averaged_drift(ref_model, [x])[0]) < 1e-15


def test_regime_independent_drift_averages_to_itself():
    m = build_builtin("two-state-tanh", {"b1": 0.7, "b2": 0.7})
    for x in (-1.0, 0.3):
        np.testing.assert_allclose(averaged_drift(m, [x]), m.drift(np.array([x]), 0), rtol=1e-14)


def test_symmetric_model_averages_to_zero():
    m = build_builtin("two-state-constant", {"q12": 1, "q21": 1, "b1": 1.5, "b2": -1.5})
    assert abs(averaged_drift(m, [0.0])[0]) < 1e-15


def test_two_state_poisson_hand_values(ref_model):
    sol = solve_poisson(ref_model, [0.0])
    np.testing.assert_allclose(sol.phi[:, 0], [1 / 3, -2 / 3], atol=1e-12)
    assert sol.residual < 1e-12 and sol.centering < 1e-12


def test_constant_drift_gives_zero_phi():
    m = build_builtin("two-state-constant", {"b1": 0.4, "b2": 0.4})
    assert np.abs(solve_poisson(m, [0.0]).phi).max() < 1e-15


@pytest.mark.parametrize("L", [3, 4, 5])
def test_phi_matches_matrix_exponential_quadrature(L):
    rng = np.random.default_rng(100 + L)
    m = random_model(rng, L, 2)
    x = rng.normal(size=2)
    sol = solve_poisson(m, x)
    assert sol.residual < 1e-10 and sol.centering < 1e-10
    np.testing.assert_allclose(sol.phi, phi_by_quadrature(m, x), atol=1e-6)


@given(L=st.integers(2, 6), d=st.integers(1, 3), seed=st.integers(0, 2 ** 32 - 1))
def test_poisson_defining_relations(L, d, seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, L, d)
    x = rng.normal(size=d)
    sol = solve_poisson(m, x)
    Q = m.generator(x)
    np.testing.assert_array_less(np.abs(Q @ sol.phi + m.drift_matrix(x) - sol.bbar), 1e-10)
    assert np.abs(sol.mu @ sol.phi).max() < 1e-10


def test_zoo_poisson_on_grid(zoo_model):
    for x in probe_grid(zoo_model):
        sol = solve_poisson(zoo_model, x)
        assert sol.residual < 1e-10 and sol.centering < 1e-10


def test_jacobian_zero_for_constant_model(ref_model):
    assert np.abs(jacobian_bbar(ref_model, [0.3], 1e-5)).max() < 1e-10


def test_jacobian_linear_drift_matches_slope():
    a = np.array([-0.5, 2.0])
    m = affine_tanh_model(A=a.reshape(2, 1, 1), c=[[0.0], [0.0]], S=np.zeros((1, 1)),
                          alpha=[[0.0, 1.0], [2.0, 0.0]])
    J = jacobian_bbar(m, [0.7], 1e-4)
    assert J[0, 0] == pytest.approx(a @ [2 / 3, 1 / 3], rel=1e-9)


def test_jacobian_second_order_convergence():
    m = build_builtin("two-state-tanh", {"sigma": 0.0})
    x = [0.4]
    exact = jacobian_bbar(m, x, 1e-6)[0, 0]
    e1 = jacobian_bbar(m, x, 0.1)[0, 0] - exact
    e2 = jacobian_bbar(m, x, 0.05)[0, 0] - exact
    assert e1 / e2 == pytest.approx(4.0, rel=0.05)


def test_default_step_scales_with_norm():
    assert default_h_fd([0.0]) == pytest.approx(1e-5)
    assert default_h_fd([3.0, 4.0]) == pytest.approx(6e-5)


def test_effective_covariance_hand_values(ref_model):
    cov = effective_covariance(ref_model, [0.0])
    assert cov.lam[0, 0] == pytest.approx(4 / 3, abs=1e-12)
    assert cov.rank == 1
    noisy = build_builtin("two-state-constant", {"sigma": 1.0})
    assert effective_covariance(noisy, [0.0]).lam[0, 0] == pytest.approx(7 / 3, abs=1e-12)


def test_effective_covariance_vanishes_without_authority():
    m = build_builtin("two-state-constant", {"b1": 0.5, "b2": 0.5, "sigma": 0.0})
    cov = effective_covariance(m, [0.0])
    assert not np.any(cov.lam) and cov.rank == 0


@given(L=st.integers(2, 5), d=st.integers(1, 3), seed=st.integers(0, 2 ** 32 - 1),
       sigma=st.sampled_from([0.0, 0.3]))
def test_effective_covariance_properties(L, d, seed, sigma):
    rng = np.random.default_rng(seed)
    m = random_model(rng, L, d, sigma_scale=sigma)
    cov = effective_covariance(m, rng.normal(size=d))
    assert np.abs(cov.lam - cov.lam.T).max() < 1e-12
    assert np.linalg.eigvalsh(cov.lam).min() >= -1e-12
    np.testing.assert_allclose(cov.lam @ cov.pinv @ cov.lam, cov.lam, atol=1e-9)


def test_rank_deficient_covariance():
    # Diffusion only along the first axis and drifts that differ only there.
    m = affine_tanh_model(A=np.zeros((2, 2, 2)), c=[[1.0, 0.0], [-1.0, 0.0]],
                          S=[[[0.5, 0.0], [0.0, 0.0]]] * 2, alpha=[[0.0, 1.0], [1.0, 0.0]])
    cov = effective_covariance(m, [0.0, 0.0])
    assert cov.rank == 1
    assert cov.lam[1, 1] == 0.0 and cov.pinv[1, 1] == 0.0


def test_analyze_point_bundles_everything(ref_model):
    pa = analyze_point(ref_model, [0.0])
    assert pa.poisson.mu == pytest.approx([2 / 3, 1 / 3])
    assert pa.cov.lam[0, 0] == pytest.approx(4 / 3)
    assert pa.sigma.shape == (2, 1, 1)
    np.testing.assert_array_equal(pa.Q, ref_model.generator(np.zeros(1)))
