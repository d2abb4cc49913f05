"""Averaged drift, the finite-state Poisson equation and the effective covariance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import invariant_measure
from .errors import IllConditioned
from .model import RegimeModel

RESIDUAL_LIMIT = 1e-8
PINV_RTOL = 1e-10


@dataclass(frozen=True)
class PoissonSolution:
    x: np.ndarray
    phi: np.ndarray
    bbar: np.ndarray
    mu: np.ndarray
    residual: float
    centering: float


@dataclass(frozen=True)
class EffectiveCovariance:
    lam: np.ndarray
    pinv: np.ndarray
    rank: int


def averaged_drift(model: RegimeModel, x) -> np.ndarray:
    """``sum_i b(x, i) mu_i(x)`` with ``mu(x)`` the frozen-chain stationary law."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mu = invariant_measure(model.generator(x)).mu
    return mu @ model.drift_matrix(x)


def solve_poisson(model: RegimeModel, x) -> PoissonSolution:
    """Centered solution of ``Q(x) Phi = -(b(x, .) - bbar(x))``.

    All ``d`` slow coordinates are solved at once from the ``(L+1) x L`` system
    that stacks ``Q(x)`` over the centering row ``mu(x)^T``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    Q = np.asarray(model.generator(x), dtype=float)
    mu = invariant_measure(Q).mu
    B = model.drift_matrix(x)
    bbar = mu @ B
    btilde = B - bbar
    M = np.vstack([Q, mu[None, :]])
    rhs = np.vstack([-btilde, np.zeros((1, model.d))])
    phi = np.linalg.lstsq(M, rhs, rcond=None)[0]
    residual = float(np.abs(Q @ phi + btilde).max())
    centering = float(np.abs(mu @ phi).max())
    if residual > RESIDUAL_LIMIT:
        raise IllConditioned(f"Poisson residual {residual:.3e} at x={x}", residual=residual)
    return PoissonSolution(x=x, phi=phi, bbar=bbar, mu=mu, residual=residual, centering=centering)


def default_h_fd(x) -> float:
    return 1e-5 * (1.0 + float(np.linalg.norm(x)))


def jacobian_bbar(model: RegimeModel, x, h_fd: float | None = None) -> np.ndarray:
    """Central finite-difference Jacobian of the averaged drift, shape ``(d, d)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = default_h_fd(x) if h_fd is None else float(h_fd)
    if not h > 0:
        raise ValueError("h_fd must be positive")
    J = np.empty((model.d, model.d))
    for k in range(model.d):
        e = np.zeros(model.d)
        e[k] = h
        J[:, k] = (averaged_drift(model, x + e) - averaged_drift(model, x - e)) / (2.0 * h)
    return J


def _pinv(lam):
    U, s, Vt = np.linalg.svd(lam)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros_like(lam), 0
    keep = s > PINV_RTOL * s[0]
    inv = (Vt[keep].T / s[keep]) @ U[:, keep].T
    return 0.5 * (inv + inv.T), int(keep.sum())


def effective_covariance(model: RegimeModel, x, solution: PoissonSolution | None = None) -> EffectiveCovariance:
    """Diffusive plus switching-fluctuation covariance at ``x``.

    ``Lambda = sum_j mu_j s_j s_j^T + sum_{(i,j)} mu_i q_ij (Phi_j - Phi_i)(Phi_j - Phi_i)^T``.
    The pseudo-inverse truncates singular values below 1e-10 of the largest.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    sol = solve_poisson(model, x) if solution is None else solution
    Q = model.generator(x)
    lam = np.zeros((model.d, model.d))
    for j in range(model.L):
        s = np.asarray(model.diffusion(x, j), dtype=float).reshape(model.d, model.d)
        lam += sol.mu[j] * (s @ s.T)
    for i, j in sorted(model.support):
        if i == j:
            continue
        dphi = sol.phi[j] - sol.phi[i]
        lam += sol.mu[i] * Q[i, j] * np.outer(dphi, dphi)
    lam = 0.5 * (lam + lam.T)
    pinv, rank = _pinv(lam)
    return EffectiveCovariance(lam=lam, pinv=pinv, rank=rank)


@dataclass(frozen=True)
class PointAnalysis:
    """Everything the rate functional needs at one averaged state."""

    x: np.ndarray
    poisson: PoissonSolution
    jacobian: np.ndarray
    cov: EffectiveCovariance
    Q: np.ndarray
    sigma: np.ndarray


def analyze_point(model: RegimeModel, x, h_fd: float | None = None) -> PointAnalysis:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    sol = solve_poisson(model, x)
    return PointAnalysis(
        x=x,
        poisson=sol,
        jacobian=jacobian_bbar(model, x, h_fd),
        cov=effective_covariance(model, x, sol),
        Q=np.asarray(model.generator(x), dtype=float),
        sigma=model.diffusion_stack(x),
    )
