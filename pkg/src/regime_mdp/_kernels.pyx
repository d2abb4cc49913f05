# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Euler / thinning kernel for affine-tanh models.

Mirrors ``regime_mdp._fallback`` draw for draw: same Philox counters, same
floating-point operation order.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport log, sqrt, cos, sin, tanh, INFINITY, M_PI
from libc.stdint cimport uint32_t, uint64_t, int32_t, int64_t

cnp.import_array()

cdef enum:
    CH_GAUSS = 0
    CH_JUMP = 1

# error codes returned from the nogil loop
cdef enum:
    ERR_NONE = 0
    ERR_ZETA = 1


cdef inline void philox(uint32_t c0, uint32_t c1, uint32_t c2, uint32_t c3,
                        uint32_t k0, uint32_t k1, uint32_t* out) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t hi0, lo0, hi1, lo1
    cdef int r
    for r in range(10):
        if r:
            k0 = k0 + <uint32_t>0x9E3779B9
            k1 = k1 + <uint32_t>0xBB67AE85
        p0 = <uint64_t>c0 * <uint64_t>0xD2511F53
        p1 = <uint64_t>c2 * <uint64_t>0xCD9E8D57
        hi0 = <uint32_t>(p0 >> 32)
        lo0 = <uint32_t>p0
        hi1 = <uint32_t>(p1 >> 32)
        lo1 = <uint32_t>p1
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
    out[0] = c0
    out[1] = c1
    out[2] = c2
    out[3] = c3


cdef inline double open_uniform(uint32_t hi, uint32_t lo) noexcept nogil:
    cdef uint64_t bits = ((<uint64_t>hi) << 32) | (<uint64_t>lo)
    return (<double>(bits >> 11) + 0.5) * 1.1102230246251565e-16


def philox4x32(uint32_t c0, uint32_t c1, uint32_t c2, uint32_t c3, uint32_t k0, uint32_t k1):
    cdef uint32_t out[4]
    philox(c0, c1, c2, c3, k0, k1, out)
    return out[0], out[1], out[2], out[3]


cdef struct Params:
    int d
    int L
    int max_tgt
    int n_steps
    double eps
    double dt
    double sqdt_eps
    double zeta_dom
    double inv_scale
    uint32_t k0
    uint32_t k1
    int has_diff
    int has_ctrl
    int has_phi
    int has_ref


cdef struct ErrInfo:
    int code
    int i
    int j
    int step
    int64_t path


cdef inline double rate_of(const double[:, ::1] alpha, const double[:, ::1] beta,
                           const double[::1] w, const double* x, int d, int i, int j) noexcept nogil:
    cdef double s = 0.0
    cdef int b
    for b in range(d):
        s += w[b] * x[b]
    return alpha[i, j] + beta[i, j] * tanh(s)


cdef inline double next_gap(const Params* P, const int32_t[::1] ntgt, int y,
                            uint32_t m, uint32_t step, uint32_t path, double* mark) noexcept nogil:
    cdef uint32_t out[4]
    cdef double u1, rate
    philox(m, step, path, CH_JUMP, P.k0, P.k1, out)
    u1 = open_uniform(out[0], out[1])
    mark[0] = open_uniform(out[2], out[3])
    rate = ntgt[y] * P.zeta_dom / P.eps
    if rate > 0.0:
        return -log(u1) / rate
    return INFINITY


cdef int run_one(const Params* P,
                 const double[:, :, ::1] A, const double[:, ::1] c, const double[:, :, ::1] S,
                 const double[:, ::1] alpha, const double[:, ::1] beta, const double[::1] w,
                 const int32_t[:, ::1] tgt, const int32_t[::1] ntgt,
                 const double[:, ::1] ref, const double[:, :, ::1] U, const double[:, :, ::1] phi,
                 const double[::1] x0, int y0, uint32_t path,
                 double* x, double* xnew, double* z,
                 double* sup_out, int64_t* jumps_out, int32_t* y_out,
                 double[:, ::1] rec_x, int32_t[::1] rec_y,
                 double* jt, int32_t* jf, int32_t* jto, int64_t jcap,
                 ErrInfo* err) noexcept nogil:
    cdef int d = P.d
    cdef int a, b, k, m, y, kk, nt, j
    cdef uint32_t blk
    cdef double tnext, mark, t_end, acc, dev, sup, v, zz, q, r, ang
    cdef uint32_t out[4]
    cdef int64_t njumps = 0
    cdef int record = rec_y.shape[0] > 0

    for a in range(d):
        x[a] = x0[a]
    y = y0
    sup = 0.0
    if P.has_ref:
        acc = 0.0
        for a in range(d):
            acc += (x[a] - ref[0, a]) * (x[a] - ref[0, a])
        sup = sqrt(acc) * P.inv_scale
    if record:
        for a in range(d):
            rec_x[0, a] = x[a]
        rec_y[0] = y
    tnext = next_gap(P, ntgt, y, 0, 0, path, &mark)
    blk = 1

    for k in range(P.n_steps):
        if k:
            blk = 0
        # Euler increment with the regime at the start of the step
        if P.has_diff:
            for m in range((d + 1) // 2):
                philox(<uint32_t>m, <uint32_t>k, path, CH_GAUSS, P.k0, P.k1, out)
                r = sqrt(-2.0 * log(open_uniform(out[0], out[1])))
                ang = 2.0 * M_PI * open_uniform(out[2], out[3])
                z[2 * m] = r * cos(ang)
                if 2 * m + 1 < d:
                    z[2 * m + 1] = r * sin(ang)
        for a in range(d):
            acc = c[y, a]
            for b in range(d):
                acc += A[y, a, b] * x[b]
            v = acc * P.dt
            if P.has_diff:
                acc = 0.0
                for b in range(d):
                    acc += S[y, a, b] * z[b]
                v += P.sqdt_eps * acc
            if P.has_ctrl:
                acc = 0.0
                for b in range(d):
                    acc += S[y, a, b] * U[k, y, b]
                v += acc * P.dt
            xnew[a] = x[a] + v

        # thinning with the slow state frozen at the knot
        t_end = (k + 1) * P.dt
        while tnext < t_end:
            nt = ntgt[y]
            zz = mark * nt
            kk = <int>zz
            if kk >= nt:
                kk = nt - 1
            zz = (zz - kk) * P.zeta_dom
            j = tgt[y, kk]
            q = rate_of(alpha, beta, w, x, d, y, j)
            if P.has_phi:
                q = q * phi[k, y, j]
            if q > P.zeta_dom or q < 0.0:
                err.code = ERR_ZETA
                err.i = y
                err.j = j
                err.step = k
                err.path = path
                return -1
            if zz < q:
                if record:
                    if njumps < jcap:
                        jt[njumps] = tnext
                        jf[njumps] = y
                        jto[njumps] = j
                y = j
                njumps += 1
            tnext = tnext + next_gap(P, ntgt, y, blk, <uint32_t>k, path, &mark)
            blk += 1

        for a in range(d):
            x[a] = xnew[a]
        if P.has_ref:
            acc = 0.0
            for a in range(d):
                acc += (x[a] - ref[k + 1, a]) * (x[a] - ref[k + 1, a])
            dev = sqrt(acc) * P.inv_scale
            if dev > sup:
                sup = dev
        if record:
            for a in range(d):
                rec_x[k + 1, a] = x[a]
            rec_y[k + 1] = y
    sup_out[0] = sup
    jumps_out[0] = njumps
    y_out[0] = y
    return 0


cdef Params make_params(dict inp) except *:
    cdef Params P
    P.d = inp["d"]
    P.L = inp["L"]
    P.max_tgt = inp["tgt"].shape[1]
    P.n_steps = inp["n_steps"]
    P.eps = inp["eps"]
    P.dt = inp["dt"]
    P.sqdt_eps = sqrt(P.eps * P.dt)
    P.zeta_dom = inp["zeta_dom"]
    P.inv_scale = inp["inv_scale"]
    P.k0 = inp["k0"]
    P.k1 = inp["k1"]
    P.has_diff = inp["has_diff"]
    P.has_ctrl = inp["U"] is not None
    P.has_phi = inp["phi"] is not None
    P.has_ref = inp["ref"] is not None
    return P


def _placeholder_3d():
    # Typed memoryviews need a buffer even when the feature is off.
    return np.zeros((1, 1, 1))


def _raise(ErrInfo err, inp):
    from .errors import ZetaViolated
    raise ZetaViolated(
        f"jump rate exceeded dominating intensity {inp['zeta_dom']} for pair "
        f"({err.i + 1},{err.j + 1}) at step {err.step} of path {err.path}",
        i=err.i + 1, j=err.j + 1, path=err.path)


def simulate_block(dict inp, int64_t path_start, int64_t n_paths):
    """Terminal states, sup deviations and jump counts for a block of paths."""
    cdef Params P = make_params(inp)
    cdef const double[:, :, ::1] A = inp["A"]
    cdef const double[:, ::1] c = inp["c"]
    cdef const double[:, :, ::1] S = inp["S"]
    cdef const double[:, ::1] alpha = inp["alpha"]
    cdef const double[:, ::1] beta = inp["beta"]
    cdef const double[::1] w = inp["w"]
    cdef const int32_t[:, ::1] tgt = inp["tgt"]
    cdef const int32_t[::1] ntgt = inp["ntgt"]
    cdef const double[:, ::1] ref = inp["ref"] if P.has_ref else np.zeros((1, P.d))
    cdef const double[:, :, ::1] U = inp["U"] if P.has_ctrl else _placeholder_3d()
    cdef const double[:, :, ::1] phi = inp["phi"] if P.has_phi else _placeholder_3d()
    cdef const double[::1] x0 = inp["x0"]
    cdef int y0 = inp["y0"]
    cdef double[:, ::1] xT = np.empty((n_paths, P.d))
    cdef int32_t[::1] yT = np.empty(n_paths, dtype=np.int32)
    cdef double[::1] sup = np.empty(n_paths)
    cdef int64_t[::1] nj = np.empty(n_paths, dtype=np.int64)
    cdef double[::1] scratch = np.empty(3 * P.d + 2)
    cdef double[:, ::1] no_rec_x = np.empty((0, P.d))
    cdef int32_t[::1] no_rec_y = np.empty(0, dtype=np.int32)
    cdef double* x = &scratch[0]
    cdef double* xnew = &scratch[P.d]
    cdef double* z = &scratch[2 * P.d]
    cdef ErrInfo err
    cdef int64_t p
    cdef int rc = 0, a
    err.code = ERR_NONE
    with nogil:
        for p in range(n_paths):
            rc = run_one(&P, A, c, S, alpha, beta, w, tgt, ntgt, ref, U, phi, x0, y0,
                         <uint32_t>(path_start + p), x, xnew, z, &sup[p], &nj[p], &yT[p],
                         no_rec_x, no_rec_y, NULL, NULL, NULL, 0, &err)
            if rc:
                break
            for a in range(P.d):
                xT[p, a] = x[a]
    if rc:
        _raise(err, inp)
    return np.asarray(xT), np.asarray(yT), np.asarray(sup), np.asarray(nj)


def simulate_record(dict inp, int64_t path):
    """Full grid record of a single path plus its jump log."""
    cdef Params P = make_params(inp)
    cdef const double[:, :, ::1] A = inp["A"]
    cdef const double[:, ::1] c = inp["c"]
    cdef const double[:, :, ::1] S = inp["S"]
    cdef const double[:, ::1] alpha = inp["alpha"]
    cdef const double[:, ::1] beta = inp["beta"]
    cdef const double[::1] w = inp["w"]
    cdef const int32_t[:, ::1] tgt = inp["tgt"]
    cdef const int32_t[::1] ntgt = inp["ntgt"]
    cdef const double[:, ::1] ref = inp["ref"] if P.has_ref else np.zeros((1, P.d))
    cdef const double[:, :, ::1] U = inp["U"] if P.has_ctrl else _placeholder_3d()
    cdef const double[:, :, ::1] phi = inp["phi"] if P.has_phi else _placeholder_3d()
    cdef const double[::1] x0 = inp["x0"]
    cdef int y0 = inp["y0"]
    cdef double[:, ::1] rec_x = np.empty((P.n_steps + 1, P.d))
    cdef int32_t[::1] rec_y = np.empty(P.n_steps + 1, dtype=np.int32)
    cdef double[::1] scratch = np.empty(3 * P.d + 2)
    cdef double sup
    cdef int64_t nj
    cdef int32_t yend
    cdef int64_t cap = 1024
    cdef ErrInfo err
    cdef int rc
    err.code = ERR_NONE
    while True:
        jt = np.empty(cap)
        jf = np.empty(cap, dtype=np.int32)
        jto = np.empty(cap, dtype=np.int32)
        rc = _record_into(&P, A, c, S, alpha, beta, w, tgt, ntgt, ref, U, phi, x0, y0,
                          <uint32_t>path, &scratch[0], &sup, &nj, &yend, rec_x, rec_y, jt, jf, jto, cap, &err)
        if rc:
            _raise(err, inp)
        if nj <= cap:
            break
        cap = nj
    return (np.asarray(rec_x), np.asarray(rec_y), sup,
            jt[:nj].copy(), jf[:nj].copy(), jto[:nj].copy())


cdef int _record_into(const Params* P,
                      const double[:, :, ::1] A, const double[:, ::1] c, const double[:, :, ::1] S,
                      const double[:, ::1] alpha, const double[:, ::1] beta, const double[::1] w,
                      const int32_t[:, ::1] tgt, const int32_t[::1] ntgt,
                      const double[:, ::1] ref, const double[:, :, ::1] U, const double[:, :, ::1] phi,
                      const double[::1] x0, int y0, uint32_t path, double* scratch,
                      double* sup, int64_t* nj, int32_t* yend, double[:, ::1] rec_x, int32_t[::1] rec_y,
                      double[::1] jt, int32_t[::1] jf, int32_t[::1] jto, int64_t cap,
                      ErrInfo* err) except? -2:
    cdef int rc
    with nogil:
        rc = run_one(P, A, c, S, alpha, beta, w, tgt, ntgt, ref, U, phi, x0, y0, path,
                     scratch, scratch + P.d, scratch + 2 * P.d, sup, nj, yend, rec_x, rec_y,
                     &jt[0], &jf[0], &jto[0], cap, err)
    return rc
