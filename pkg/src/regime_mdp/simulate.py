"""Time stepping: averaged ODE, coupled and controlled slow-fast paths, deviations.

The slow component uses Euler-Maruyama on a uniform grid.  Switching is exact
thinning of a dominating Poisson stream with intensity
``n_targets(i) * zeta_dom / eps`` while in regime ``i``; a candidate with
uniform mark falls into one of ``n_targets(i)`` stacked bands of width
``zeta_dom`` and is accepted when it lands below ``q_ij(X_k) * phi_ij``,
with ``X_k`` the slow state at the last Euler knot.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels, rng
from .errors import ZetaViolated
from .model import RegimeModel
from .poisson import averaged_drift

BLOCK_COMPILED = 4096
BLOCK_PYTHON = 65536


def default_dt(eps: float) -> float:
    return min(1e-3, eps / 10.0)


def grid_steps(T: float, dt: float) -> int:
    """Number of Euler steps; ``dt`` must divide ``T`` up to rounding."""
    if not dt > 0 or not T > 0:
        raise ValueError("T and dt must be positive")
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"dt={dt} does not divide T={T}")
    return n


def resolve_workers(workers: int | None) -> int:
    if not workers:
        return os.cpu_count() or 1
    return int(workers)


@dataclass(frozen=True)
class AveragedPath:
    times: np.ndarray
    x: np.ndarray


@dataclass
class CoupledPath:
    """One sampled trajectory on the Euler grid.

    ``y`` holds 1-based regime labels; ``jump_log`` rows are
    ``(time, from_regime, to_regime)``, also 1-based.
    """

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    jump_log: list
    seed: int
    eps: float = math.nan
    dt: float = math.nan
    path_index: int = 0


@dataclass(frozen=True)
class DeviationPath:
    times: np.ndarray
    eta: np.ndarray
    epsilon: float
    h_eps: float


@dataclass
class BatchResult:
    x_T: np.ndarray
    y_T: np.ndarray
    sup_dev: np.ndarray
    n_jumps: np.ndarray
    meta: dict = field(default_factory=dict)


def _rk4_step(model, x, h):
    k1 = averaged_drift(model, x)
    k2 = averaged_drift(model, x + 0.5 * h * k1)
    k3 = averaged_drift(model, x + 0.5 * h * k2)
    k4 = averaged_drift(model, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def solve_averaged(model: RegimeModel, x0, T: float, dt: float) -> AveragedPath:
    """Classical RK4 for ``dxbar/dt = bbar(xbar)`` on the uniform grid ``k * dt``."""
    n = grid_steps(T, dt)
    x = np.empty((n + 1, model.d))
    x[0] = np.atleast_1d(np.asarray(x0, dtype=float))
    for k in range(n):
        x[k + 1] = _rk4_step(model, x[k], dt)
    return AveragedPath(times=np.arange(n + 1) * dt, x=x)


def averaged_at(model: RegimeModel, x0, times, dt: float) -> np.ndarray:
    """Averaged state at arbitrary sorted times, stepping at most ``dt`` at a time."""
    times = np.asarray(times, dtype=float)
    if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
        raise ValueError("times must be sorted and non-negative")
    out = np.empty((times.size, model.d))
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    t = 0.0
    for idx, target in enumerate(times):
        span = target - t
        if span > 0:
            n = max(1, int(math.ceil(span / dt - 1e-9)))
            h = span / n
            for _ in range(n):
                x = _rk4_step(model, x, h)
        t = target
        out[idx] = x
    return out


def _target_tables(model):
    targets = model.targets
    width = max(1, max((len(t) for t in targets), default=0))
    tgt = np.zeros((model.L, width), dtype=np.int32)
    ntgt = np.zeros(model.L, dtype=np.int32)
    for i, t in enumerate(targets):
        ntgt[i] = len(t)
        tgt[i, :len(t)] = t
    return tgt, ntgt


def kernel_inputs(model: RegimeModel, eps, x0, y0, T, dt, seed, reference=None, inv_scale=1.0,
                  U=None, phi=None, zeta_dom=None):
    """Pack everything the kernels read into one dict.

    ``y0`` is 1-based here and converted to the kernels' 0-based index.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    n_steps = grid_steps(T, dt)
    y0 = int(y0)
    if not 1 <= y0 <= model.L:
        raise ValueError(f"y0 must be in 1..{model.L}")
    x0 = np.ascontiguousarray(np.atleast_1d(np.asarray(x0, dtype=float)))
    if x0.shape != (model.d,):
        raise ValueError(f"x0 must have length {model.d}")
    tgt, ntgt = _target_tables(model)
    k0, k1 = rng.split_seed(seed)
    t = model.tables
    if t is not None:
        has_diff = bool(np.any(t.S != 0.0))
        arrays = dict(A=np.ascontiguousarray(t.A), c=np.ascontiguousarray(t.c),
                      S=np.ascontiguousarray(t.S), alpha=np.ascontiguousarray(t.alpha),
                      beta=np.ascontiguousarray(t.beta), w=np.ascontiguousarray(t.w))
    else:
        has_diff = True
        arrays = {}
    if reference is not None:
        reference = np.ascontiguousarray(reference, dtype=float)
        if reference.shape != (n_steps + 1, model.d):
            raise ValueError("reference path must live on the simulation grid")
    return dict(
        arrays, model=model, d=model.d, L=model.L, n_steps=n_steps, eps=float(eps), dt=float(dt),
        seed=int(seed) & 0xFFFFFFFFFFFFFFFF, k0=k0, k1=k1, x0=x0, y0=y0 - 1, tgt=tgt, ntgt=ntgt,
        has_diff=has_diff, ref=reference, inv_scale=float(inv_scale),
        U=None if U is None else np.ascontiguousarray(U, dtype=float),
        phi=None if phi is None else np.ascontiguousarray(phi, dtype=float),
        zeta_dom=float(model.zeta if zeta_dom is None else zeta_dom),
    )


def _locate_violation(inp, path):
    """Replay an offending path in numpy to recover the slow state of the violation."""
    try:
        kernels.fallback.simulate_record(inp, path)
    except ZetaViolated as exc:
        return exc
    return None


def _record(inp, path_index, backend):
    kern = kernels.select(inp["model"], backend)
    try:
        return kern.simulate_record(inp, path_index)
    except ZetaViolated as exc:
        if exc.x is None and kern is not kernels.fallback:
            raise (_locate_violation(inp, path_index) or exc) from None
        raise


def _to_path(inp, rec, seed, path_index):
    rec_x, rec_y, _, jt, jf, jto = rec
    n = inp["n_steps"]
    log = [(float(t), int(a) + 1, int(b) + 1) for t, a, b in zip(jt, jf, jto)]
    return CoupledPath(times=np.arange(n + 1) * inp["dt"], x=np.asarray(rec_x), y=np.asarray(rec_y) + 1,
                       jump_log=log, seed=int(seed), eps=inp["eps"], dt=inp["dt"], path_index=path_index)


def simulate_coupled(model: RegimeModel, eps, x0, y0, T, dt=None, seed=0, *, path_index=0,
                     backend=None) -> CoupledPath:
    """Sample one path of the coupled system; reproducible from its arguments."""
    dt = default_dt(eps) if dt is None else dt
    inp = kernel_inputs(model, eps, x0, y0, T, dt, seed)
    return _to_path(inp, _record(inp, path_index, backend), seed, path_index)


def _sample_on_grid(control, times, shape, name):
    if callable(control):
        out = np.array([np.asarray(control(t), dtype=float).reshape(shape) for t in times])
    else:
        arr = np.asarray(control, dtype=float)
        if arr.shape == shape:
            out = np.broadcast_to(arr, (times.size,) + shape).copy()
        elif arr.shape[1:] == shape and arr.shape[0] in (times.size, times.size + 1):
            out = arr[:times.size].copy()
        else:
            raise ValueError(f"{name} must be a callable or an array of shape {shape} or (n, *{shape})")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} must be finite")
    return out


def control_inputs(model: RegimeModel, eps, h_eps, T, dt, u_star, c_star):
    """Grid samples of the feedback controls.

    Returns ``(U, phi, zeta_dom)`` where ``U[k, i] = sqrt(eps) h u*_i(t_k)`` and
    ``phi[k, i, j] = 1 + sqrt(eps) h c*_ij(t_k)`` on support pairs.
    """
    n = grid_steps(T, dt)
    times = np.arange(n) * dt
    scale = math.sqrt(eps) * h_eps
    u = _sample_on_grid(u_star, times, (model.L, model.d), "u_star")
    c = _sample_on_grid(c_star, times, (model.L, model.L), "c_star")
    phi = np.ones((n, model.L, model.L))
    pairs = [(i, j) for (i, j) in sorted(model.support) if i != j]
    for i, j in pairs:
        phi[:, i, j] = 1.0 + scale * c[:, i, j]
    if pairs:
        vals = np.array([phi[:, i, j] for i, j in pairs])
        if np.any(vals < 0):
            raise ValueError("jump-rate multiplier 1 + sqrt(eps) h c* is negative; reduce the control")
        zeta_dom = model.zeta * float(vals.max())
    else:
        zeta_dom = model.zeta
    if not math.isfinite(zeta_dom):
        raise ZetaViolated("dominating jump intensity overflowed")
    return scale * u, phi, zeta_dom


def simulate_controlled(model: RegimeModel, eps, h_eps, x0, y0, T, dt, seed, u_star, c_star, *,
                        path_index=0, backend=None) -> CoupledPath:
    """Sample one path under feedback controls ``(u*, c*)``.

    The slow drift gains ``sqrt(eps) h sigma(X, Y) u*_Y(t)`` and the jump rate of
    pair ``(i, j)`` is multiplied by ``1 + sqrt(eps) h c*_ij(t)``.
    """
    dt = default_dt(eps) if dt is None else dt
    U, phi, zeta_dom = control_inputs(model, eps, h_eps, T, dt, u_star, c_star)
    inp = kernel_inputs(model, eps, x0, y0, T, dt, seed, U=U, phi=phi, zeta_dom=zeta_dom)
    return _to_path(inp, _record(inp, path_index, backend), seed, path_index)


def simulate_batch(model: RegimeModel, eps, x0, y0, T, dt, seed, n_paths, *, reference=None,
                   inv_scale=1.0, controls=None, workers=1, path_offset=0, backend=None) -> BatchResult:
    """Terminal summaries of paths ``path_offset .. path_offset + n_paths - 1``.

    ``sup_dev`` is ``max_k ||X(t_k) - reference(t_k)|| * inv_scale`` when a
    reference path is given.  Each path depends only on ``(seed, path index)``,
    so the output is independent of ``workers``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    dt = default_dt(eps) if dt is None else dt
    U = phi = zeta_dom = None
    if controls is not None:
        U, phi, zeta_dom = controls
    inp = kernel_inputs(model, eps, x0, y0, T, dt, seed, reference=reference, inv_scale=inv_scale,
                        U=U, phi=phi, zeta_dom=zeta_dom)
    kern = kernels.select(model, backend)
    size = BLOCK_PYTHON if kern is kernels.fallback else BLOCK_COMPILED
    starts = list(range(path_offset, path_offset + n_paths, size))
    spans = [(s, min(size, path_offset + n_paths - s)) for s in starts]

    def run(span):
        try:
            return kern.simulate_block(inp, *span)
        except ZetaViolated as exc:
            if exc.x is None and kern is not kernels.fallback:
                raise (_locate_violation(inp, exc.path) or exc) from None
            raise

    workers = resolve_workers(workers)
    if workers == 1 or len(spans) == 1:
        parts = [run(s) for s in spans]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, spans))
    x_T = np.concatenate([p[0] for p in parts])
    y_T = np.concatenate([p[1] for p in parts]).astype(np.int64) + 1
    sup = np.concatenate([p[2] for p in parts])
    nj = np.concatenate([p[3] for p in parts])
    return BatchResult(x_T=x_T, y_T=y_T, sup_dev=sup, n_jumps=nj,
                       meta={"n_steps": inp["n_steps"], "dt": dt, "backend": getattr(kern, "__name__", "")})


def deviation_path(coupled: CoupledPath, averaged: AveragedPath, eps, h_eps) -> DeviationPath:
    """``(X - Xbar) / (sqrt(eps) h)`` on the shared grid."""
    if coupled.x.shape != averaged.x.shape or not np.allclose(coupled.times, averaged.times, rtol=0, atol=1e-12):
        raise ValueError("coupled and averaged paths must share the same time grid")
    if not np.array_equal(coupled.x[0], averaged.x[0]):
        raise ValueError("coupled and averaged paths must start from the same x0")
    eta = (coupled.x - averaged.x) / (math.sqrt(eps) * h_eps)
    return DeviationPath(times=coupled.times.copy(), eta=eta, epsilon=float(eps), h_eps=float(h_eps))
