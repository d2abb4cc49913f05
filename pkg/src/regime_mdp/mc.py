"""Monte Carlo tail probabilities, normalized decay rates and CLT covariance.

The deviation process is ``eta = (X - Xbar) / (sqrt(eps) h)`` with
``h = eps ** -beta``.  Moderate deviations predict
``-log P(eta in A) / h**2 -> inf_A I`` as ``eps -> 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import RegimeModel
from .poisson import analyze_point, averaged_drift
from .simulate import default_dt, simulate_batch, solve_averaged

EVENTS = ("terminal", "sup")


@dataclass(frozen=True)
class TailEstimate:
    eps: float
    h_eps: float
    threshold: float
    n_paths: int
    p_hat: float
    std_err: float
    decay_rate: float
    decay_rate_lower: float | None = None
    event: str = "terminal"


def h_of(eps: float, h_exponent: float) -> float:
    return float(eps) ** (-float(h_exponent))


def _check_exponent(h_exponent):
    if not 0.0 < h_exponent < 0.5:
        raise ValueError("h_exponent must lie in (0, 0.5)")


def tail_from_counts(eps, h_eps, a, n_paths, hits, event="terminal") -> TailEstimate:
    p = hits / n_paths
    se = math.sqrt(p * (1.0 - p) / n_paths)
    h2 = h_eps * h_eps
    if hits == 0:
        return TailEstimate(eps, h_eps, a, n_paths, 0.0, 0.0, math.inf,
                            -math.log(3.0 / n_paths) / h2, event)
    return TailEstimate(eps, h_eps, a, n_paths, p, se, max(-math.log(p) / h2, 0.0), None, event)


def estimate_tail(model: RegimeModel, eps: float, h_exponent: float, x0, y0: int, T: float,
                  dt: float | None, a: float, event: str = "terminal", n_paths: int = 10_000,
                  seed: int = 0, *, workers: int = 1, backend=None) -> TailEstimate:
    """Estimate ``P(eta_1(T) >= a)`` (terminal) or ``P(sup_t ||eta(t)|| >= a)`` (sup).

    ``a = -inf`` is accepted as an always-true event.  When no path hits, the
    decay rate is infinite and ``decay_rate_lower`` holds the rule-of-three
    bound ``-log(3 / n_paths) / h**2``.
    """
    _check_exponent(h_exponent)
    if event not in EVENTS:
        raise ValueError(f"event must be one of {EVENTS}")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    dt = default_dt(eps) if dt is None else dt
    h = h_of(eps, h_exponent)
    a = float(a)
    if a == -math.inf:
        return TailEstimate(eps, h, a, n_paths, 1.0, 0.0, 0.0, None, event)
    scale = math.sqrt(eps) * h
    avg = solve_averaged(model, x0, T, dt)
    if event == "terminal":
        res = simulate_batch(model, eps, x0, y0, T, dt, seed, n_paths, workers=workers, backend=backend)
        eta = (res.x_T[:, 0] - avg.x[-1, 0]) / scale
    else:
        res = simulate_batch(model, eps, x0, y0, T, dt, seed, n_paths, reference=avg.x,
                             inv_scale=1.0 / scale, workers=workers, backend=backend)
        eta = res.sup_dev
    return tail_from_counts(eps, h, a, n_paths, int(np.count_nonzero(eta >= a)), event)


def mdp_scan(model: RegimeModel, eps_grid: Sequence[float], h_exponent: float, a: float, T: float,
             dt_rule: Callable[[float], float] | None = None, n_paths: int = 10_000, seed: int = 0, *,
             x0=None, y0: int = 1, event: str = "terminal", workers: int = 1, backend=None) -> list:
    """One :class:`TailEstimate` per ``eps``, all with the same master seed."""
    eps_grid = [float(e) for e in eps_grid]
    if not eps_grid:
        raise ValueError("eps_grid is empty")
    if any(b > a_ for a_, b in zip(eps_grid, eps_grid[1:])):
        raise ValueError("eps_grid must be non-increasing")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    dt_rule = dt_rule or default_dt
    x0 = np.zeros(model.d) if x0 is None else x0
    return [estimate_tail(model, e, h_exponent, x0, y0, T, dt_rule(e), a, event, n_paths, seed,
                          workers=workers, backend=backend) for e in eps_grid]


def trend_ok(estimates: Sequence[TailEstimate], target: float, allowed_inversions: int = 1) -> bool:
    """``|decay_rate - target|`` non-increasing, up to inversions within the combined standard error."""
    errs = [abs(e.decay_rate - target) for e in estimates]
    sds = [decay_rate_se(e) for e in estimates]
    inversions = 0
    for k in range(len(errs) - 1):
        if errs[k + 1] > errs[k]:
            if errs[k + 1] - errs[k] > math.hypot(sds[k], sds[k + 1]):
                return False
            inversions += 1
    return inversions <= allowed_inversions


def decay_rate_se(est: TailEstimate) -> float:
    """Delta-method standard error of ``-log(p_hat) / h**2``."""
    if est.p_hat <= 0.0:
        return math.inf
    return est.std_err / (est.p_hat * est.h_eps ** 2)


def lyapunov_covariance(model: RegimeModel, x0, T: float, n_steps: int | None = None):
    """RK4 for ``(xbar, Sigma)`` with ``Sigma' = J Sigma + Sigma J^T + Lambda``, ``Sigma(0) = 0``."""
    n = n_steps or max(200, int(math.ceil(T / 5e-3)))
    h = T / n
    d = model.d

    def f(x, S):
        pa = analyze_point(model, x)
        J = pa.jacobian
        return averaged_drift(model, x), J @ S + S @ J.T + pa.cov.lam

    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    S = np.zeros((d, d))
    for _ in range(n):
        k1x, k1s = f(x, S)
        k2x, k2s = f(x + 0.5 * h * k1x, S + 0.5 * h * k1s)
        k3x, k3s = f(x + 0.5 * h * k2x, S + 0.5 * h * k2s)
        k4x, k4s = f(x + h * k3x, S + h * k3s)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        S = S + (h / 6.0) * (k1s + 2 * k2s + 2 * k3s + k4s)
    return 0.5 * (S + S.T)


def clt_check(model: RegimeModel, eps: float, x0, y0: int, T: float, dt: float | None, n_paths: int,
              seed: int = 0, *, workers: int = 1, backend=None):
    """Compare the empirical covariance of ``(X(T) - Xbar(T)) / sqrt(eps)`` with the Lyapunov prediction.

    Returns ``(empirical, predicted, max_rel_dev)`` where the deviation is the
    largest entrywise gap divided by the largest predicted entry (absolute when
    the prediction vanishes).
    """
    if n_paths < 1000:
        raise ValueError("clt_check needs at least 1000 paths")
    dt = default_dt(eps) if dt is None else dt
    avg = solve_averaged(model, x0, T, dt)
    res = simulate_batch(model, eps, x0, y0, T, dt, seed, n_paths, workers=workers, backend=backend)
    eta = (res.x_T - avg.x[-1]) / math.sqrt(eps)
    emp = np.atleast_2d(np.cov(eta, rowvar=False))
    pred = lyapunov_covariance(model, x0, T)
    gap = float(np.abs(emp - pred).max())
    norm = float(np.abs(pred).max())
    return emp, pred, gap / norm if norm > 0 else gap
