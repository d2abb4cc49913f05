"""Pure numpy implementation of the simulation kernel.

Vectorized across paths rather than looping per path; draws use the same
Philox counters and arithmetic order as the compiled kernel, so the two agree
to rounding of the transcendental functions.  This backend also handles
models without :class:`AffineTanhTables` by way of the model's batched
evaluators.
"""
from __future__ import annotations

import numpy as np

from . import rng
from .errors import ZetaViolated


def _gaps(inp, y, m, step, paths):
    u1, mark = rng.uniform_pair(inp["seed"], m, np.uint32(step), paths, rng.CH_JUMP)
    rate = inp["ntgt"][y] * inp["zeta_dom"] / inp["eps"]
    with np.errstate(divide="ignore"):
        gap = np.where(rate > 0.0, -np.log(u1) / np.where(rate > 0.0, rate, 1.0), np.inf)
    return gap, mark


def _run(inp, paths, record=False):
    model = inp["model"]
    d, n_steps, dt = inp["d"], inp["n_steps"], inp["dt"]
    n = paths.size
    ref, U, phi = inp["ref"], inp["U"], inp["phi"]
    inv_scale = inp["inv_scale"]
    sqdt_eps = np.sqrt(inp["eps"] * dt)
    tgt, ntgt, zeta_dom = inp["tgt"], inp["ntgt"], inp["zeta_dom"]

    X = np.tile(np.asarray(inp["x0"], dtype=float), (n, 1))
    Y = np.full(n, inp["y0"], dtype=np.int64)
    njumps = np.zeros(n, dtype=np.int64)
    sup = np.zeros(n)
    if ref is not None:
        acc = np.zeros(n)
        for a in range(d):
            acc += (X[:, a] - ref[0, a]) * (X[:, a] - ref[0, a])
        sup = np.sqrt(acc) * inv_scale
    if record:
        rec_x = np.empty((n_steps + 1, d))
        rec_y = np.empty(n_steps + 1, dtype=np.int32)
        rec_x[0], rec_y[0] = X[0], Y[0]
        log_t, log_f, log_to = [], [], []
    tnext, mark = _gaps(inp, Y, np.uint32(0), 0, paths)
    blk = np.ones(n, dtype=np.uint32)

    for k in range(n_steps):
        if k:
            blk[:] = 0
        Sy = model.diffusion_batch(X, Y)
        inc = model.drift_batch(X, Y) * dt
        if inp["has_diff"]:
            Z = rng.normals(inp["seed"], k, paths, d)
            noise = np.zeros((n, d))
            for b in range(d):
                noise += Sy[:, :, b] * Z[:, b:b + 1]
            inc = inc + sqdt_eps * noise
        if U is not None:
            cu = np.zeros((n, d))
            Uk = U[k][Y]
            for b in range(d):
                cu += Sy[:, :, b] * Uk[:, b:b + 1]
            inc = inc + cu * dt
        Xnew = X + inc

        t_end = (k + 1) * dt
        active = np.flatnonzero(tnext < t_end)
        while active.size:
            y = Y[active]
            nt = ntgt[y]
            zz = mark[active] * nt
            kk = np.minimum(zz.astype(np.int64), nt - 1)
            zz = (zz - kk) * zeta_dom
            j = tgt[y, kk]
            q = model.rate_batch(X[active], y, j)
            if phi is not None:
                q = q * phi[k, y, j]
            bad = (q > zeta_dom) | (q < 0.0)
            if np.any(bad):
                b0 = int(np.flatnonzero(bad)[0])
                raise ZetaViolated(
                    f"jump rate exceeded dominating intensity {zeta_dom} for pair "
                    f"({int(y[b0]) + 1},{int(j[b0]) + 1}) at step {k} of path {int(paths[active[b0]])}",
                    x=X[active[b0]].copy(), i=int(y[b0]) + 1, j=int(j[b0]) + 1,
                    path=int(paths[active[b0]]))
            acc = zz < q
            if record and acc[0]:
                log_t.append(float(tnext[0]))
                log_f.append(int(y[0]))
                log_to.append(int(j[0]))
            hit = active[acc]
            Y[hit] = j[acc]
            njumps[hit] += 1
            gap, mk = _gaps(inp, Y[active], blk[active], k, paths[active])
            tnext[active] = tnext[active] + gap
            mark[active] = mk
            blk[active] += 1
            active = active[tnext[active] < t_end]

        X = Xnew
        if ref is not None:
            acc = np.zeros(n)
            for a in range(d):
                acc += (X[:, a] - ref[k + 1, a]) * (X[:, a] - ref[k + 1, a])
            sup = np.maximum(sup, np.sqrt(acc) * inv_scale)
        if record:
            rec_x[k + 1], rec_y[k + 1] = X[0], Y[0]
    if record:
        return (rec_x, rec_y, float(sup[0]), np.array(log_t), np.array(log_f, dtype=np.int32),
                np.array(log_to, dtype=np.int32))
    return X, Y.astype(np.int32), sup, njumps


def simulate_block(inp, path_start, n_paths):
    paths = np.arange(path_start, path_start + n_paths, dtype=np.uint32)
    return _run(inp, paths)


def simulate_record(inp, path):
    return _run(inp, np.array([path], dtype=np.uint32), record=True)
