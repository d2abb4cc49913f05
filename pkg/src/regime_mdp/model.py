"""Coefficient bundles for slow-fast regime-switching systems.

A :class:`RegimeModel` carries the drift ``b(x, i)``, diffusion ``sigma(x, i)``
and generator ``Q(x)`` of a system

    dX = b(X, Y) dt + sqrt(eps) sigma(X, Y) dW,
    Y jumps i -> j at rate q_ij(X) / eps,

together with the dominating jump intensity ``zeta`` and the support set of
regime pairs that can ever jump.  Regimes are 0-based inside evaluators and
arrays; user-facing regime labels (``y0``, recorded paths, CSV files) are
1-based.

Models built from :class:`AffineTanhTables` can also be simulated by the
compiled kernel, since every coefficient is then a fixed parametric form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import GeneratorError, ModelError

ROW_SUM_TOL = 1e-10
RATE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class AffineTanhTables:
    """Parametric coefficients understood by the simulation kernels.

    ``b(x, i) = A[i] @ x + c[i]``, ``sigma(x, i) = S[i]`` and, for ``i != j``,
    ``q_ij(x) = alpha[i, j] + beta[i, j] * tanh(w @ x)``.
    """

    A: np.ndarray
    c: np.ndarray
    S: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    w: np.ndarray

    def drift(self, x, i):
        x = np.asarray(x, dtype=float)
        out = self.c[i].copy()
        for k in range(x.shape[0]):
            out += self.A[i, :, k] * x[k]
        return out

    def diffusion(self, x, i):
        return self.S[i].copy()

    def generator(self, x):
        x = np.asarray(x, dtype=float)
        s = 0.0
        for k in range(x.shape[0]):
            s += self.w[k] * x[k]
        Q = self.alpha + self.beta * math.tanh(s)
        np.fill_diagonal(Q, 0.0)
        np.fill_diagonal(Q, -Q.sum(axis=1))
        return Q


@dataclass(frozen=True, eq=False)
class RegimeModel:
    """Coefficient bundle of one slow-fast system.

    Evaluators must be pure: identical inputs give bit-identical outputs, and
    they hold no mutable state so they can be shared between threads.
    """

    d: int
    L: int
    drift: Callable[[np.ndarray, int], np.ndarray]
    diffusion: Callable[[np.ndarray, int], np.ndarray]
    generator: Callable[[np.ndarray], np.ndarray]
    zeta: float
    support: frozenset
    name: str = "custom"
    params: Mapping = field(default_factory=dict)
    tables: AffineTanhTables | None = None

    @property
    def targets(self) -> tuple[tuple[int, ...], ...]:
        """Reachable target regimes per source regime, sorted."""
        return tuple(
            tuple(sorted(j for (a, j) in self.support if a == i and j != i))
            for i in range(self.L)
        )

    def drift_matrix(self, x) -> np.ndarray:
        """``b(x, i)`` stacked over regimes, shape ``(L, d)``."""
        return np.array([self.drift(x, i) for i in range(self.L)], dtype=float).reshape(self.L, self.d)

    def diffusion_stack(self, x) -> np.ndarray:
        return np.array([self.diffusion(x, i) for i in range(self.L)], dtype=float).reshape(
            self.L, self.d, self.d)

    # Batched evaluation used by the vectorized simulator.

    def drift_batch(self, X, Y):
        if self.tables is not None:
            t = self.tables
            out = t.c[Y].copy()
            for k in range(self.d):
                out += t.A[Y, :, k] * X[:, k:k + 1]
            return out
        return np.array([self.drift(x, int(y)) for x, y in zip(X, Y)], dtype=float).reshape(-1, self.d)

    def diffusion_batch(self, X, Y):
        if self.tables is not None:
            return self.tables.S[Y]
        return np.array([self.diffusion(x, int(y)) for x, y in zip(X, Y)], dtype=float).reshape(
            -1, self.d, self.d)

    def rate_batch(self, X, Y, J):
        """``q_{Y_n, J_n}(X_n)`` for every row ``n``."""
        if self.tables is not None:
            t = self.tables
            s = np.zeros(X.shape[0])
            for k in range(self.d):
                s += t.w[k] * X[:, k]
            return t.alpha[Y, J] + t.beta[Y, J] * np.tanh(s)
        return np.array([self.generator(x)[int(i), int(j)] for x, i, j in zip(X, Y, J)], dtype=float)


def _as_stack(values, L, shape, name):
    arr = np.asarray(values, dtype=float)
    if arr.shape == shape:
        arr = np.broadcast_to(arr, (L,) + shape)
    if arr.shape != (L,) + shape:
        raise ModelError(f"{name} must have shape {(L,) + shape}, got {arr.shape}")
    return np.array(arr)


def affine_tanh_model(A, c, S, alpha, beta=None, w=None, zeta=None, name="affine-tanh", params=None):
    """Build a model with affine drift, constant diffusion and tanh-modulated rates.

    Parameters
    ----------
    A : array_like, shape (L, d, d)
        Drift matrices per regime.
    c : array_like, shape (L, d)
        Drift offsets per regime.
    S : array_like, shape (L, d, d) or (d, d)
        Diffusion matrices per regime.
    alpha, beta : array_like, shape (L, L)
        Rate amplitudes; off-diagonal ``q_ij(x) = alpha_ij + beta_ij tanh(w @ x)``.
        ``alpha_ij >= |beta_ij|`` is required so rates stay non-negative.
    w : array_like, shape (d,), optional
        Direction feeding the tanh modulation; defaults to the first axis.
    zeta : float, optional
        Dominating intensity; defaults to ``max_ij (alpha_ij + |beta_ij|) + 1``.
    """
    alpha = np.array(alpha, dtype=float)
    if alpha.ndim != 2 or alpha.shape[0] != alpha.shape[1]:
        raise ModelError("alpha must be a square matrix")
    L = alpha.shape[0]
    c = np.array(c, dtype=float)
    if c.ndim == 1:
        c = c.reshape(L, -1)
    d = c.shape[1]
    c = _as_stack(c, L, (d,), "c")
    A = _as_stack(A, L, (d, d), "A")
    S = _as_stack(S, L, (d, d), "S")
    beta = np.zeros((L, L)) if beta is None else np.array(beta, dtype=float)
    if beta.shape != (L, L):
        raise ModelError("beta must match alpha's shape")
    w = np.eye(d)[0] if w is None else np.array(w, dtype=float).reshape(d)
    off = ~np.eye(L, dtype=bool)
    if np.any(alpha[off] < np.abs(beta[off]) - RATE_TOL):
        raise ModelError("rate amplitudes must satisfy alpha_ij >= |beta_ij| (rates would turn negative)")
    np.fill_diagonal(alpha, 0.0)
    np.fill_diagonal(beta, 0.0)
    modulated = bool(np.any(w != 0.0))
    peak = alpha + (np.abs(beta) if modulated else beta)
    support = frozenset((i, j) for i in range(L) for j in range(L) if i != j and peak[i, j] > RATE_TOL)
    if zeta is None:
        zeta = float(peak[off].max(initial=0.0)) + 1.0
    for arr in (A, c, S, alpha, beta, w):
        arr.setflags(write=False)
    tables = AffineTanhTables(A=A, c=c, S=S, alpha=alpha, beta=beta, w=w)
    return RegimeModel(
        d=d, L=L, drift=tables.drift, diffusion=tables.diffusion, generator=tables.generator,
        zeta=float(zeta), support=support, name=name, params=dict(params or {}), tables=tables,
    )


# ---------------------------------------------------------------------------
# Built-in zoo

def _three_state_defaults():
    return {
        "alpha": [[0.0, 1.0, 0.5], [0.8, 0.0, 1.2], [0.6, 1.0, 0.0]],
        "beta": [[0.0, 0.5, -0.3], [0.4, 0.0, 0.6], [-0.2, 0.5, 0.0]],
        "drifts": [1.0, 0.0, -1.5],
        "kappa": 0.5,
        "sigma": 0.2,
        "d": 1,
    }


ZOO_DEFAULTS = {
    "two-state-constant": {"q12": 1.0, "q21": 2.0, "b1": 1.0, "b2": -2.0, "sigma": 0.0, "d": 1},
    "two-state-tanh": {"a12": 1.0, "b12": 0.5, "a21": 2.0, "b21": -0.5, "b1": 1.0, "b2": -2.0,
                       "kappa": 0.5, "sigma": 0.3, "d": 1},
    "three-state-tanh": _three_state_defaults(),
    "linear-2d": {"A1": [[-1.0, 0.5], [0.0, -1.0]], "A2": [[-0.5, 0.0], [0.3, -1.5]],
                  "c1": [1.0, 0.0], "c2": [-1.0, 0.5], "s1": 0.3, "s2": 0.5, "q12": 1.0, "q21": 1.5},
}

ZOO_DOCS = {
    "two-state-constant": "constant rates q12, q21; drift b1, b2 on every axis; sigma*I. Bounded drift (H1).",
    "two-state-tanh": "q12 = a12 + b12 tanh(x1), q21 = a21 + b21 tanh(x1); drift b_i - kappa*x; "
                      "sigma*I. Bounded-derivative drift (H1)'.",
    "three-state-tanh": "q_ij = alpha_ij + beta_ij tanh(x1); drift drifts_i - kappa*x; sigma*I. (H1)'.",
    "linear-2d": "d=2, two regimes with drift A_i x + c_i, diffusion s_i*I, constant rates. (H1)'.",
}


def _positive(name, value):
    if not value > 0:
        raise ModelError(f"parameter {name} must be > 0, got {value}")
    return float(value)


def _nonneg(name, value):
    if not value >= 0:
        raise ModelError(f"parameter {name} must be >= 0, got {value}")
    return float(value)


def _dim(value):
    if int(value) != value or value < 1:
        raise ModelError(f"parameter d must be a positive integer, got {value}")
    return int(value)


def _build_two_state_constant(p):
    d = _dim(p["d"])
    q12, q21 = _positive("q12", p["q12"]), _positive("q21", p["q21"])
    sigma = _nonneg("sigma", p["sigma"])
    c = [[float(p["b1"])] * d, [float(p["b2"])] * d]
    return dict(A=np.zeros((2, d, d)), c=c, S=sigma * np.eye(d),
                alpha=[[0.0, q12], [q21, 0.0]], w=np.zeros(d))


def _tanh_pair(p, a, b):
    amp, mod = float(p[a]), float(p[b])
    if not amp > abs(mod):
        raise ModelError(f"need {a} > |{b}| for strictly positive rates, got {amp}, {mod}")
    return amp, mod


def _build_two_state_tanh(p):
    d = _dim(p["d"])
    a12, b12 = _tanh_pair(p, "a12", "b12")
    a21, b21 = _tanh_pair(p, "a21", "b21")
    kappa = _nonneg("kappa", p["kappa"])
    sigma = _nonneg("sigma", p["sigma"])
    return dict(A=-kappa * np.eye(d), c=[[float(p["b1"])] * d, [float(p["b2"])] * d],
                S=sigma * np.eye(d), alpha=[[0.0, a12], [a21, 0.0]],
                beta=[[0.0, b12], [b21, 0.0]], w=np.eye(d)[0])


def _build_three_state_tanh(p):
    d = _dim(p["d"])
    alpha = np.array(p["alpha"], dtype=float)
    beta = np.array(p["beta"], dtype=float)
    if alpha.shape != (3, 3) or beta.shape != (3, 3):
        raise ModelError("alpha and beta must be 3x3")
    off = ~np.eye(3, dtype=bool)
    if np.any(alpha[off] <= np.abs(beta[off])):
        raise ModelError("need alpha_ij > |beta_ij| off the diagonal for strictly positive rates")
    drifts = np.array(p["drifts"], dtype=float)
    if drifts.shape != (3,):
        raise ModelError("drifts must have 3 entries")
    kappa = _nonneg("kappa", p["kappa"])
    sigma = _nonneg("sigma", p["sigma"])
    return dict(A=-kappa * np.eye(d), c=np.repeat(drifts[:, None], d, axis=1),
                S=sigma * np.eye(d), alpha=alpha, beta=beta, w=np.eye(d)[0])


def _build_linear_2d(p):
    A = np.array([p["A1"], p["A2"]], dtype=float)
    c = np.array([p["c1"], p["c2"]], dtype=float)
    if A.shape != (2, 2, 2) or c.shape != (2, 2):
        raise ModelError("A1, A2 must be 2x2 and c1, c2 length 2")
    s1, s2 = _nonneg("s1", p["s1"]), _nonneg("s2", p["s2"])
    q12, q21 = _positive("q12", p["q12"]), _positive("q21", p["q21"])
    return dict(A=A, c=c, S=np.array([s1 * np.eye(2), s2 * np.eye(2)]),
                alpha=[[0.0, q12], [q21, 0.0]], w=np.zeros(2))


_BUILDERS = {
    "two-state-constant": _build_two_state_constant,
    "two-state-tanh": _build_two_state_tanh,
    "three-state-tanh": _build_three_state_tanh,
    "linear-2d": _build_linear_2d,
}


def builtin_names():
    return sorted(_BUILDERS)


def build_builtin(name: str, params: Mapping | None = None) -> RegimeModel:
    """Instantiate a named zoo model.

    Unspecified parameters take the values in ``ZOO_DEFAULTS[name]``; unknown
    keys and out-of-range values raise :class:`ModelError`.
    """
    if name not in _BUILDERS:
        raise ModelError(f"unknown model {name!r}; choose from {builtin_names()}")
    params = dict(params or {})
    unknown = set(params) - set(ZOO_DEFAULTS[name])
    if unknown:
        raise ModelError(f"unknown parameters for {name}: {sorted(unknown)}")
    merged = {**ZOO_DEFAULTS[name], **params}
    parts = _BUILDERS[name](merged)
    return affine_tanh_model(name=name, params=merged, **parts)


# ---------------------------------------------------------------------------
# Assumption validators

@dataclass
class ModelValidationReport:
    lipschitz_estimates: dict
    rate_bounds: tuple
    irreducible_everywhere: bool
    min_invariant_mass: float
    zeta_violations: int = 0
    n_samples: int = 0


def check_generator(Q, x=None, tol=ROW_SUM_TOL):
    """Raise :class:`GeneratorError` if ``Q`` is not a valid generator."""
    Q = np.asarray(Q, dtype=float)
    off = ~np.eye(Q.shape[0], dtype=bool)
    if np.any(Q[off] < 0):
        i, j = np.argwhere((Q < 0) & off)[0]
        raise GeneratorError(f"negative off-diagonal rate q[{i},{j}]={Q[i, j]} at x={x}")
    sums = np.abs(Q.sum(axis=1))
    if np.any(sums > tol):
        row = int(np.argmax(sums))
        raise GeneratorError(f"row {row} of Q(x) sums to {Q[row].sum():.3e} at x={x}")
    return Q


def validate_model(model: RegimeModel, samples, h_fd: float = 1e-6) -> ModelValidationReport:
    """Estimate the constants of the standing assumptions at sampled points.

    Lipschitz constants are maxima of forward difference quotients along the
    coordinate axes; irreducibility is strong connectivity of the rate graph
    with threshold 1e-12.
    """
    from .chain import invariant_measure, is_irreducible

    samples = [np.atleast_1d(np.asarray(x, dtype=float)) for x in samples]
    if not samples:
        raise ValueError("samples must be non-empty")
    if not h_fd > 0:
        raise ValueError("h_fd must be positive")
    pairs = [(i, j) for (i, j) in sorted(model.support) if i != j]
    lip_b = lip_s = lip_q = k_q = 0.0
    upper, lower = 0.0, math.inf
    irreducible = True
    min_mass = math.inf
    violations = 0
    for x in samples:
        Q = check_generator(model.generator(x), x)
        B = model.drift_matrix(x)
        Sg = model.diffusion_stack(x)
        for k in range(model.d):
            xp = x.copy()
            xp[k] += h_fd
            Qp = model.generator(xp)
            dB = model.drift_matrix(xp) - B
            dS = model.diffusion_stack(xp) - Sg
            lip_b = max(lip_b, float(np.linalg.norm(dB, axis=1).max()) / h_fd)
            lip_s = max(lip_s, float(np.linalg.norm(dS, ord=2, axis=(1, 2)).max()) / h_fd)
            dQ = np.abs(Qp - Q)
            np.fill_diagonal(dQ, 0.0)
            lip_q = max(lip_q, float(dQ.max()) / h_fd)
            k_q = max(k_q, float(dQ.sum(axis=1).max()) / h_fd)
        if pairs:
            rates = np.array([Q[i, j] for i, j in pairs])
            upper = max(upper, float(rates.max()))
            lower = min(lower, float(rates.min()))
            violations += int(np.sum(rates > model.zeta - 1.0 + RATE_TOL))
        if is_irreducible(Q):
            min_mass = min(min_mass, float(invariant_measure(Q).mu.min()))
        else:
            irreducible = False
    if not irreducible or min_mass is math.inf:
        min_mass = 0.0
    if lower is math.inf:
        lower = 0.0
    return ModelValidationReport(
        lipschitz_estimates={"drift": lip_b, "diffusion": lip_s, "generator": lip_q, "generator_l1": k_q},
        rate_bounds=(upper, lower),
        irreducible_everywhere=irreducible,
        min_invariant_mass=min_mass,
        zeta_violations=violations,
        n_samples=len(samples),
    )
