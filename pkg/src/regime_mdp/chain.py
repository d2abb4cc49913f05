"""Linear algebra of the frozen fast chain: invariant measures and Gamma matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import NotIrreducible
from .model import RATE_TOL, check_generator

COND_LIMIT = 1e12


@dataclass(frozen=True)
class InvariantMeasure:
    mu: np.ndarray
    residual: float


@dataclass(frozen=True)
class GammaMatrix:
    gamma: np.ndarray


def is_irreducible(Q, tol: float = RATE_TOL) -> bool:
    """Strong connectivity of the directed graph ``{(i, j): q_ij > tol}``."""
    Q = np.asarray(Q, dtype=float)
    if Q.shape[0] == 1:
        return True
    adj = (Q > tol) & ~np.eye(Q.shape[0], dtype=bool)
    n, _ = connected_components(adj.astype(np.int8), directed=True, connection="strong")
    return n == 1


def invariant_measure(Q) -> InvariantMeasure:
    """Stationary distribution of an irreducible generator.

    Solves the augmented system ``[Q^T; 1^T] mu = [0; 1]`` by least squares.

    >>> invariant_measure([[-1.0, 1.0], [2.0, -2.0]]).mu
    array([0.66666667, 0.33333333])
    """
    Q = np.asarray(Q, dtype=float)
    L = Q.shape[0]
    M = np.vstack([Q.T, np.ones((1, L))])
    rhs = np.zeros(L + 1)
    rhs[-1] = 1.0
    mu, _, rank, sv = np.linalg.lstsq(M, rhs, rcond=None)
    if rank < L or sv[0] > COND_LIMIT * sv[-1]:
        raise NotIrreducible(f"augmented stationary system is singular (rank {rank} < {L})")
    if mu.min() <= 0.0:
        raise NotIrreducible("stationary distribution has non-positive mass; chain is reducible")
    mu = mu / mu.sum()
    return InvariantMeasure(mu=mu, residual=float(np.abs(mu @ Q).max()))


def gamma_of_constant_rates(Q_at_x) -> GammaMatrix:
    """The jump-rate matrix obtained when every control density equals one.

    Integrating the unit density over ``[0, q_ij(x)]`` returns ``q_ij(x)``, so the
    result is the generator itself with its diagonal rebuilt from the rows.
    """
    Q = check_generator(Q_at_x)
    return _with_balanced_diagonal(Q)


def gamma_of_controlled_rates(Q_at_x, c) -> GammaMatrix:
    """Jump-rate matrix for control densities constant on each rate interval.

    Off-diagonal entries are ``c_ij * q_ij(x)``; the diagonal makes every row sum
    to zero.
    """
    Q = check_generator(Q_at_x)
    return _with_balanced_diagonal(Q * np.asarray(c, dtype=float))


def _with_balanced_diagonal(G):
    G = np.array(G, dtype=float)
    np.fill_diagonal(G, 0.0)
    np.fill_diagonal(G, -G.sum(axis=1))
    return GammaMatrix(gamma=G)


def occupation_fractions(y, L: int) -> np.ndarray:
    """Fraction of grid samples spent in each regime (labels ``1..L``)."""
    y = np.asarray(y)
    return np.bincount(y - 1, minlength=L)[:L] / y.size
