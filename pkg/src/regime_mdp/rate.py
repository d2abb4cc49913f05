"""Moderate-deviation rate functional, optimal controls and a QP oracle.

At each time the cheapest way to produce a deviation velocity ``v`` with
Brownian controls ``u_j`` (weighted by the stationary law) and constant
jump-intensity perturbations ``c_ij`` on the rate intervals is a weighted
minimum-norm problem.  Its solution is ``lam = Lambda^+ v``,
``u_j = sigma_j^T lam``, ``c_ij = (Phi_j - Phi_i)^T lam`` with cost
``v^T Lambda^+ v / 2``.  :func:`pointwise_rate_qp_oracle` solves the same
problem with z-dependent jump controls on a grid and no closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IllConditioned, Infeasible
from .model import RegimeModel
from .poisson import PINV_RTOL, PointAnalysis, analyze_point
from .simulate import AveragedPath, DeviationPath

FEAS_RTOL = 1e-8


@dataclass
class PointwiseRate:
    x: np.ndarray
    v: np.ndarray
    cost: float
    u_star: np.ndarray
    c_star: np.ndarray
    feasible: bool
    multiplier: np.ndarray = field(repr=False, default=None)


@dataclass
class RateEvaluation:
    value: float
    per_knot: list
    grid: np.ndarray
    first_infeasible_time: float | None = None

    @property
    def costs(self) -> np.ndarray:
        return np.array([p.cost for p in self.per_knot])


@dataclass
class TargetRate:
    value: float
    times: np.ndarray
    eta: np.ndarray
    v: np.ndarray


def _pairs(model):
    return [(i, j) for (i, j) in sorted(model.support) if i != j]


def pointwise_from_analysis(model: RegimeModel, pa: PointAnalysis, v) -> PointwiseRate:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    lam_mat, pinv = pa.cov.lam, pa.cov.pinv
    mult = pinv @ v
    feasible = bool(np.linalg.norm(lam_mat @ mult - v) <= FEAS_RTOL * (1.0 + np.linalg.norm(v)))
    phi = pa.poisson.phi
    u = np.einsum("jab,a->jb", pa.sigma, mult)
    c = np.zeros((model.L, model.L))
    for i, j in _pairs(model):
        c[i, j] = (phi[j] - phi[i]) @ mult
    cost = 0.5 * float(v @ mult) if feasible else math.inf
    return PointwiseRate(x=pa.x, v=v, cost=max(cost, 0.0), u_star=u, c_star=c, feasible=feasible,
                         multiplier=mult)


def pointwise_rate(model: RegimeModel, x, v) -> PointwiseRate:
    """Minimal instantaneous cost of deviation velocity ``v`` at averaged state ``x``."""
    return pointwise_from_analysis(model, analyze_point(model, x), v)


def control_drift(model: RegimeModel, pa: PointAnalysis, u, c) -> np.ndarray:
    """Deviation velocity produced by controls ``(u, c)``; inverse of the rate map."""
    mu, phi = pa.poisson.mu, pa.poisson.phi
    out = np.zeros(model.d)
    for j in range(model.L):
        out += mu[j] * (pa.sigma[j] @ u[j])
    for i, j in _pairs(model):
        out += mu[i] * pa.Q[i, j] * c[i, j] * (phi[j] - phi[i])
    return out


def control_cost(model: RegimeModel, pa: PointAnalysis, u, c) -> float:
    mu = pa.poisson.mu
    total = sum(mu[j] * float(u[j] @ u[j]) for j in range(model.L))
    total += sum(mu[i] * pa.Q[i, j] * c[i, j] ** 2 for i, j in _pairs(model))
    return 0.5 * total


def pointwise_rate_qp_oracle(model: RegimeModel, x, v, z_grid_size: int = 8) -> float:
    """Brute-force pointwise cost with piecewise-constant jump controls in ``z``.

    Each jump control lives on a uniform grid of ``z_grid_size`` cells over
    ``[0, zeta]``, refined by the breakpoint ``q_ij(x)`` so no cell straddles the
    rate interval.  Cells outside ``[0, q_ij(x)]`` keep their cost but do not
    move the state.  The KKT system is solved directly.
    """
    if z_grid_size < 2:
        raise ValueError("z_grid_size must be at least 2")
    pa = analyze_point(model, x)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    d, L = model.d, model.L
    mu, phi = pa.poisson.mu, pa.poisson.phi
    hess, cols = [], []
    for j in range(L):
        for b in range(d):
            hess.append(mu[j])
            cols.append(mu[j] * pa.sigma[j][:, b])
    base = np.linspace(0.0, model.zeta, z_grid_size + 1)
    for i, j in _pairs(model):
        q = pa.Q[i, j]
        edges = np.unique(np.concatenate([base, [min(max(q, 0.0), model.zeta)]]))
        widths = np.diff(edges)
        inside = edges[1:] <= q * (1.0 + 1e-15)
        dphi = phi[j] - phi[i]
        for wdt, ins in zip(widths, inside):
            if wdt <= 0.0:
                continue
            hess.append(mu[i] * wdt)
            cols.append(mu[i] * dphi * wdt if ins else np.zeros(d))
    H = np.array(hess)
    G = np.array(cols).T.reshape(d, -1)
    n = H.size
    if not np.any(v):
        return 0.0
    reach = np.linalg.lstsq(G, v, rcond=None)[0]
    if np.linalg.norm(G @ reach - v) > FEAS_RTOL * (1.0 + np.linalg.norm(v)):
        return math.inf
    K = np.zeros((n + d, n + d))
    K[:n, :n] = np.diag(H)
    K[:n, n:] = G.T
    K[n:, :n] = G
    rhs = np.concatenate([np.zeros(n), v])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    z = sol[:n]
    kkt_res = np.abs(K @ sol - rhs).max()
    if kkt_res > 1e-8 * (1.0 + np.abs(rhs).max()):
        raise IllConditioned(f"KKT residual {kkt_res:.3e} with a reachable target", residual=kkt_res)
    return 0.5 * float(z @ (H * z))


def _eta_array(eta):
    if isinstance(eta, DeviationPath):
        return np.asarray(eta.eta, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return eta[:, None] if eta.ndim == 1 else eta


def analyze_path(model: RegimeModel, xs, h_fd=None) -> list:
    return [analyze_point(model, x, h_fd) for x in xs]


def rate_functional(model: RegimeModel, averaged: AveragedPath, eta, analyses=None) -> RateEvaluation:
    """Trapezoidal evaluation of the rate functional on a sampled path.

    ``eta`` shares the averaged path's grid.  Its derivative uses central
    differences inside and second-order one-sided stencils at the ends.
    """
    times = np.asarray(averaged.times, dtype=float)
    eta = _eta_array(eta)
    if eta.shape != averaged.x.shape:
        raise ValueError("eta must share the averaged path's grid and dimension")
    if np.abs(eta[0]).max() > 1e-12:
        raise ValueError("eta must start at 0")
    if times.size < 3:
        raise ValueError("need at least three knots")
    deta = np.gradient(eta, times, axis=0, edge_order=2)
    if analyses is None:
        analyses = analyze_path(model, averaged.x)
    per_knot = []
    first_bad = None
    for k, pa in enumerate(analyses):
        v = deta[k] - pa.jacobian @ eta[k]
        pr = pointwise_from_analysis(model, pa, v)
        per_knot.append(pr)
        if not pr.feasible and first_bad is None:
            first_bad = float(times[k])
    if first_bad is not None:
        return RateEvaluation(value=math.inf, per_knot=per_knot, grid=times, first_infeasible_time=first_bad)
    costs = np.array([p.cost for p in per_knot])
    value = float(np.sum(0.5 * (costs[1:] + costs[:-1]) * np.diff(times)))
    return RateEvaluation(value=value, per_knot=per_knot, grid=times)


def _interp_path(averaged, times):
    grid = np.asarray(averaged.times, dtype=float)
    if times[-1] > grid[-1] * (1 + 1e-12) + 1e-12:
        raise ValueError("averaged path does not reach the requested horizon")
    return np.column_stack([np.interp(times, grid, averaged.x[:, k]) for k in range(averaged.x.shape[1])])


def min_rate_to_target(model: RegimeModel, averaged: AveragedPath, a, T: float, n_knots: int = 256,
                       direction=None) -> TargetRate:
    """Cheapest deviation path reaching ``a`` at time ``T``.

    Solves the Euler-discretized linear-quadratic problem
    ``min sum_k dt v_k^T Lambda_k^+ v_k / 2`` subject to
    ``eta_{k+1} = eta_k + (J_k eta_k + v_k) dt``, ``eta_0 = 0`` and either
    ``eta_N = a`` or, when ``direction`` is given, ``direction . eta_N = a``.
    Controls are confined to ``range(Lambda_k)`` and the full KKT system is
    solved as one dense linear system.
    """
    if n_knots < 8:
        raise ValueError("n_knots must be at least 8")
    d = model.d
    if direction is None:
        C = np.eye(d)
        target = np.atleast_1d(np.asarray(a, dtype=float)).reshape(d)
    else:
        C = np.atleast_2d(np.asarray(direction, dtype=float)).reshape(1, d)
        target = np.atleast_1d(np.asarray(a, dtype=float)).reshape(1)
    times = np.linspace(0.0, T, n_knots + 1)
    dt = T / n_knots
    xs = _interp_path(averaged, times)
    if not np.any(target):
        return TargetRate(0.0, times, np.zeros((n_knots + 1, d)), np.zeros((n_knots, d)))

    bases, weights, jacs = [], [], []
    for k in range(n_knots):
        pa = analyze_point(model, xs[k])
        ev, vec = np.linalg.eigh(pa.cov.lam)
        keep = ev > PINV_RTOL * max(ev.max(), 0.0) if ev.max() > 0 else np.zeros_like(ev, dtype=bool)
        bases.append(vec[:, keep])
        weights.append(1.0 / ev[keep])
        jacs.append(pa.jacobian)
    ranks = [b.shape[1] for b in bases]
    w_off = np.concatenate([[0], np.cumsum(ranks)]).astype(int)
    nw = int(w_off[-1])
    ne = n_knots * d
    nvar = nw + ne
    m = C.shape[0]
    ncon = ne + m

    def eta_col(k):  # column offset of eta_k for k = 1..N
        return nw + (k - 1) * d

    Hdiag = np.zeros(nvar)
    E = np.zeros((ncon, nvar))
    rhs_c = np.zeros(ncon)
    I = np.eye(d)
    for k in range(n_knots):
        Hdiag[w_off[k]:w_off[k + 1]] = dt * weights[k]
        rows = slice(k * d, (k + 1) * d)
        E[rows, eta_col(k + 1):eta_col(k + 1) + d] = I
        if k > 0:
            E[rows, eta_col(k):eta_col(k) + d] = -(I + dt * jacs[k])
        E[rows, w_off[k]:w_off[k + 1]] = -dt * bases[k]
    E[ne:, eta_col(n_knots):eta_col(n_knots) + d] = C
    rhs_c[ne:] = target

    K = np.zeros((nvar + ncon, nvar + ncon))
    K[:nvar, :nvar] = np.diag(Hdiag)
    K[:nvar, nvar:] = E.T
    K[nvar:, :nvar] = E
    rhs = np.concatenate([np.zeros(nvar), rhs_c])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    z = sol[:nvar]
    miss = np.abs(E @ z - rhs_c).max()
    if miss > FEAS_RTOL * (1.0 + np.abs(target).max()):
        raise Infeasible(f"target {target} is unreachable: terminal residual {miss:.3e}")
    eta = np.zeros((n_knots + 1, d))
    eta[1:] = z[nw:].reshape(n_knots, d)
    v = np.array([bases[k] @ z[w_off[k]:w_off[k + 1]] for k in range(n_knots)]).reshape(n_knots, d)
    value = 0.5 * float(z[:nw] @ (Hdiag[:nw] * z[:nw]))
    return TargetRate(value=value, times=times, eta=eta, v=v)
