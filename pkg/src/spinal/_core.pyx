# cython: language_level=3
"""Compiled simulation kernels; see ``_pycore`` for the reference version."""

import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log1p, fabs, INFINITY, NAN
from libc.stdlib cimport malloc, free
from numpy.random cimport bitgen_t

cnp.import_array()


cdef struct Model:
    int D
    int K
    int E
    int guard
    const long long* ev_parent
    const long long* ev_k
    const long long* ev_size
    const long long* term_ptr
    const double* term_coef
    const long long* term_exp


cdef class _ModelHolder:
    # keeps the contiguous arrays alive while the struct points into them
    cdef object arrays
    cdef Model m

    def __init__(self, cm):
        cdef cnp.int64_t[::1] ev_parent = np.ascontiguousarray(cm.ev_parent, dtype=np.int64)
        cdef cnp.int64_t[::1] ev_k = np.ascontiguousarray(cm.ev_k, dtype=np.int64).ravel()
        cdef cnp.int64_t[::1] ev_size = np.ascontiguousarray(cm.ev_size, dtype=np.int64)
        cdef cnp.int64_t[::1] term_ptr = np.ascontiguousarray(cm.term_ptr, dtype=np.int64)
        cdef double[::1] term_coef = np.ascontiguousarray(cm.term_coef, dtype=np.float64)
        cdef cnp.int64_t[::1] term_exp = np.ascontiguousarray(cm.term_exp, dtype=np.int64).ravel()
        # zero-size views cannot be indexed; pad with a dummy slot
        if term_coef.shape[0] == 0:
            term_coef = np.zeros(1)
            term_exp = np.zeros(max(1, cm.D), dtype=np.int64)
        self.arrays = (ev_parent, ev_k, ev_size, term_ptr, term_coef, term_exp)
        self.m.D = cm.D
        self.m.K = cm.K
        self.m.E = cm.E
        self.m.guard = cm.guard
        self.m.ev_parent = <const long long*>&ev_parent[0] if ev_parent.shape[0] else NULL
        self.m.ev_k = <const long long*>&ev_k[0] if ev_k.shape[0] else NULL
        self.m.ev_size = <const long long*>&ev_size[0] if ev_size.shape[0] else NULL
        self.m.term_ptr = <const long long*>&term_ptr[0]
        self.m.term_coef = &term_coef[0]
        self.m.term_exp = <const long long*>&term_exp[0]


cdef inline double _tau(const Model* m, int e, const double* z) noexcept nogil:
    cdef double tot = 0.0, v
    cdef long long t, a
    cdef int i
    for t in range(m.term_ptr[e], m.term_ptr[e + 1]):
        v = m.term_coef[t]
        for i in range(m.D):
            for a in range(m.term_exp[t * m.D + i]):
                v *= z[i]
        tot += v
    return tot


cdef inline bint _blocked(const Model* m, int e, long long ntot) noexcept nogil:
    return m.guard and ntot + m.ev_size[e] - 1 > m.K


cdef double _rates(const Model* m, const long long* counts, long long ntot,
                   const double* zn, double* rates) noexcept nogil:
    cdef double total = 0.0, r
    cdef int e
    cdef long long x
    for e in range(m.E):
        x = m.ev_parent[e]
        if counts[x] == 0 or _blocked(m, e, ntot):
            rates[e] = 0.0
        else:
            r = counts[x] * _tau(m, e, zn)
            if r < 0.0:
                r = 0.0
            rates[e] = r
        total += rates[e]
    return total


cdef inline int _pick(const double* rates, int n, double u) noexcept nogil:
    cdef double acc = 0.0
    cdef int e, last = -1
    for e in range(n):
        if rates[e] > 0.0:
            last = e
            acc += rates[e]
            if u < acc:
                return e
    return last


cdef inline double _next(bitgen_t* bg) noexcept nogil:
    return bg.next_double(bg.state)


cdef bitgen_t* _bitgen(rng) except NULL:
    return <bitgen_t*>PyCapsule_GetPointer(rng.bit_generator.capsule, "BitGenerator")


def pop_batch(cm, init, double T, probes, long n_reps, rng, bint record=False):
    cdef _ModelHolder holder = _ModelHolder(cm)
    cdef Model* m = &holder.m
    cdef bitgen_t* bg = _bitgen(rng)
    cdef int D = m.D, E = m.E
    cdef long K = m.K
    cdef double[::1] pr = np.ascontiguousarray(probes, dtype=np.float64)
    cdef int P = pr.shape[0]
    cdef cnp.int64_t[::1] init_v = np.ascontiguousarray(init, dtype=np.int64)
    cdef long long n0 = 0
    cdef int x, y, i, q, r, a, b, e, nk, tmp
    for x in range(D):
        n0 += init_v[x]
    cdef long cap = n_reps * K
    o_rep_a = np.zeros(cap, np.int64)
    o_type_a = np.zeros(cap, np.int64)
    o_root_a = np.zeros(cap, np.int64)
    o_occ_a = np.zeros((cap, D))
    o_nchg_a = np.zeros(cap, np.int64)
    o_ptype_a = np.zeros((cap, P), np.int64)
    o_aid_a = np.zeros(cap, np.int64)
    zprobe_a = np.zeros((n_reps, P, D), np.int64)
    nevents_a = np.zeros(n_reps, np.int64)
    cdef cnp.int64_t[::1] o_rep = o_rep_a
    cdef cnp.int64_t[::1] o_type = o_type_a
    cdef cnp.int64_t[::1] o_root = o_root_a
    cdef double[:, ::1] o_occ = o_occ_a
    cdef cnp.int64_t[::1] o_nchg = o_nchg_a
    cdef cnp.int64_t[:, ::1] o_ptype = o_ptype_a
    cdef cnp.int64_t[::1] o_aid = o_aid_a
    cdef cnp.int64_t[:, :, ::1] zprobe = zprobe_a
    cdef cnp.int64_t[::1] nevents = nevents_a
    a_type, a_birth, a_death, a_parent, a_rank = [], [], [], [], []
    j_t, j_z = [], []

    # per-slot state
    cdef long long* counts = <long long*>malloc(D * sizeof(long long))
    cdef double* zn = <double*>malloc(D * sizeof(double))
    cdef double* rates = <double*>malloc((E + 1) * sizeof(double))
    cdef long* s_type = <long*>malloc(K * sizeof(long))
    cdef long* s_root = <long*>malloc(K * sizeof(long))
    cdef double* s_birth = <double*>malloc(K * sizeof(double))
    cdef double* s_occ = <double*>malloc(K * D * sizeof(double))
    cdef long* s_nchg = <long*>malloc(K * sizeof(long))
    cdef long* s_probe = <long*>malloc(K * (P + 1) * sizeof(long))
    cdef long* s_aid = <long*>malloc(K * sizeof(long))
    cdef long* tlist = <long*>malloc(D * K * sizeof(long))
    cdef long* tpos = <long*>malloc(K * sizeof(long))
    cdef long* freel = <long*>malloc(K * sizeof(long))
    cdef double* pocc = <double*>malloc(D * sizeof(double))
    cdef long* p_probe = <long*>malloc((P + 1) * sizeof(long))
    cdef long* kids = <long*>malloc(256 * sizeof(long))
    cdef long nfree, sl, par, last, p_root, p_nchg, p_aid, nout = 0, rep
    cdef long long ntot, nev
    cdef double s, s_next, u, total
    cdef int p
    try:
        for e in range(E):
            if m.ev_size[e] > 256:
                raise ValueError("offspring vectors larger than 256 are not supported")
        for rep in range(n_reps):
            ntot = n0
            for x in range(D):
                counts[x] = init_v[x]
            nfree = 0
            for i in range(K - 1, <long>n0 - 1, -1):
                freel[nfree] = i
                nfree += 1
            sl = 0
            for x in range(D):
                for i in range(init_v[x]):
                    s_type[sl] = x
                    s_root[sl] = sl
                    s_birth[sl] = 0.0
                    s_nchg[sl] = 0
                    for y in range(D):
                        s_occ[sl * D + y] = 0.0
                    for q in range(P):
                        s_probe[sl * P + q] = 0
                    tlist[x * K + i] = sl
                    tpos[sl] = i
                    if record:
                        s_aid[sl] = len(a_type)
                        a_type.append(x)
                        a_birth.append(0.0)
                        a_death.append(NAN)
                        a_parent.append(-1)
                        a_rank.append(sl)
                    else:
                        s_aid[sl] = 0
                    sl += 1
            if record:
                j_t.append(0.0)
                j_z.append([counts[x] for x in range(D)])

            s = 0.0
            p = 0
            nev = 0
            while True:
                for i in range(D):
                    zn[i] = counts[i] / <double>K
                total = _rates(m, counts, ntot, zn, rates)
                if total > 0.0:
                    u = _next(bg)
                    s_next = s + (-log1p(-u) / total)
                else:
                    s_next = INFINITY
                while p < P and pr[p] < s_next and pr[p] <= T:
                    for x in range(D):
                        zprobe[rep, p, x] = counts[x]
                        for i in range(counts[x]):
                            s_probe[tlist[x * K + i] * P + p] = x
                    p += 1
                if s_next > T:
                    break
                s = s_next
                nev += 1
                u = _next(bg) * total
                e = _pick(rates, E, u)
                x = m.ev_parent[e]
                i = <int>(_next(bg) * counts[x])
                if i >= counts[x]:
                    i = counts[x] - 1
                par = tlist[x * K + i]
                p_root = s_root[par]
                p_nchg = s_nchg[par]
                p_aid = s_aid[par]
                for q in range(P):
                    p_probe[q] = s_probe[par * P + q]
                for y in range(D):
                    pocc[y] = s_occ[par * D + y]
                pocc[x] += s - s_birth[par]
                last = tlist[x * K + counts[x] - 1]
                tlist[x * K + i] = last
                tpos[last] = i
                counts[x] -= 1
                ntot -= 1
                freel[nfree] = par
                nfree += 1
                nk = 0
                for y in range(D):
                    for a in range(m.ev_k[e * D + y]):
                        kids[nk] = y
                        nk += 1
                if record:
                    for a in range(nk - 1, 0, -1):
                        b = <int>(_next(bg) * (a + 1))
                        if b > a:
                            b = a
                        tmp = kids[a]
                        kids[a] = kids[b]
                        kids[b] = tmp
                    a_death[p_aid] = s
                for r in range(nk):
                    y = kids[r]
                    nfree -= 1
                    sl = freel[nfree]
                    s_type[sl] = y
                    s_root[sl] = p_root
                    s_birth[sl] = s
                    for q in range(D):
                        s_occ[sl * D + q] = pocc[q]
                    s_nchg[sl] = p_nchg + (1 if y != x else 0)
                    for q in range(P):
                        s_probe[sl * P + q] = p_probe[q]
                    tlist[y * K + counts[y]] = sl
                    tpos[sl] = counts[y]
                    counts[y] += 1
                    ntot += 1
                    if record:
                        s_aid[sl] = len(a_type)
                        a_type.append(y)
                        a_birth.append(s)
                        a_death.append(NAN)
                        a_parent.append(p_aid)
                        a_rank.append(r)
                if record:
                    j_t.append(s)
                    j_z.append([counts[q] for q in range(D)])
            nevents[rep] = nev
            for x in range(D):
                for i in range(counts[x]):
                    sl = tlist[x * K + i]
                    o_rep[nout] = rep
                    o_type[nout] = x
                    o_root[nout] = s_root[sl]
                    for y in range(D):
                        o_occ[nout, y] = s_occ[sl * D + y]
                    o_occ[nout, x] += T - s_birth[sl]
                    o_nchg[nout] = s_nchg[sl]
                    for q in range(P):
                        o_ptype[nout, q] = s_probe[sl * P + q]
                    o_aid[nout] = s_aid[sl]
                    nout += 1
    finally:
        free(counts); free(zn); free(rates); free(s_type); free(s_root)
        free(s_birth); free(s_occ); free(s_nchg); free(s_probe); free(s_aid)
        free(tlist); free(tpos); free(freel); free(pocc); free(p_probe); free(kids)

    out = {
        "rep": o_rep_a[:nout],
        "type": o_type_a[:nout],
        "root": o_root_a[:nout],
        "occ": o_occ_a[:nout],
        "nchg": o_nchg_a[:nout],
        "ptype": o_ptype_a[:nout],
        "zprobe": zprobe_a,
        "nevents": nevents_a,
    }
    if record:
        out.update(
            aid=o_aid_a[:nout],
            a_type=np.asarray(a_type, np.int64),
            a_birth=np.asarray(a_birth, float),
            a_death=np.asarray(a_death, float),
            a_parent=np.asarray(a_parent, np.int64),
            a_rank=np.asarray(a_rank, np.int64),
            j_t=np.asarray(j_t, float),
            j_z=np.asarray(j_z, np.int64).reshape(len(j_t), D),
        )
    return out


cdef inline void _flow_at(double fl_h, const double[:, ::1] fl_z, const double[:, ::1] fl_dz,
                          double s, double* out, int D) noexcept nogil:
    cdef long M = fl_z.shape[0] - 1
    cdef long c = <long>(s / fl_h)
    cdef double th, th2, th3, h00, h10, h01, h11
    cdef int i
    if c >= M:
        c = M - 1
    if c < 0:
        c = 0
    th = (s - c * fl_h) / fl_h
    th2 = th * th
    th3 = th2 * th
    h00 = 2.0 * th3 - 3.0 * th2 + 1.0
    h10 = th3 - 2.0 * th2 + th
    h01 = -2.0 * th3 + 3.0 * th2
    h11 = th3 - th2
    for i in range(D):
        out[i] = h00 * fl_z[c, i] + h10 * fl_h * fl_dz[c, i] + h01 * fl_z[c + 1, i] + h11 * fl_h * fl_dz[c + 1, i]


cdef inline double _dev(const long long* counts, long K, const double* zf, int D) noexcept nogil:
    cdef double d = 0.0
    cdef int i
    for i in range(D):
        d += fabs(counts[i] / <double>K - zf[i])
    return d


def star_batch(cm, c0_init, int y0, double t, probes, long n_reps, rng, js_event, js_y, theta,
               double fl_h, fl_z, fl_dz, bint coupled, bint force_limit, bint record=False):
    cdef _ModelHolder holder = _ModelHolder(cm)
    cdef Model* m = &holder.m
    cdef bitgen_t* bg = _bitgen(rng)
    cdef int D = m.D, E = m.E
    cdef long K = m.K
    cdef double[::1] pr = np.ascontiguousarray(probes, dtype=np.float64)
    cdef int P = pr.shape[0]
    cdef cnp.int64_t[::1] c0i = np.ascontiguousarray(c0_init, dtype=np.int64)
    cdef cnp.int64_t[::1] jse = np.ascontiguousarray(js_event, dtype=np.int64)
    cdef cnp.int64_t[::1] jsy = np.ascontiguousarray(js_y, dtype=np.int64)
    cdef int J = jse.shape[0]
    cdef double[::1] th_v = np.ascontiguousarray(theta, dtype=np.float64)
    if J == 0:
        jse = np.zeros(1, np.int64)
        jsy = np.zeros(1, np.int64)
        th_v = np.zeros(1)
    cdef const double[:, ::1] flz = np.ascontiguousarray(fl_z, dtype=np.float64).reshape(-1, D)
    cdef const double[:, ::1] fldz = np.ascontiguousarray(fl_dz, dtype=np.float64).reshape(-1, D)
    cdef bint have_flow = fl_h > 0.0
    cdef long G = flz.shape[0]

    o_sup_a = np.zeros(n_reps)
    o_equal_a = np.zeros(n_reps, np.int64)
    o_tdiv_a = np.full(n_reps, -1.0)
    o_lam_a = np.zeros(n_reps)
    o_ptype_a = np.zeros((n_reps, P), np.int64)
    o_pcomp_a = np.zeros((n_reps, P, D))
    o_occ_a = np.zeros((n_reps, D))
    o_nchg_a = np.zeros(n_reps, np.int64)
    o_uptype_a = np.zeros((n_reps, P), np.int64)
    o_uocc_a = np.zeros((n_reps, D))
    o_unchg_a = np.zeros(n_reps, np.int64)
    cdef double[::1] o_sup = o_sup_a
    cdef cnp.int64_t[::1] o_equal = o_equal_a
    cdef double[::1] o_tdiv = o_tdiv_a
    cdef double[::1] o_lam = o_lam_a
    cdef cnp.int64_t[:, ::1] o_ptype = o_ptype_a
    cdef double[:, :, ::1] o_pcomp = o_pcomp_a
    cdef double[:, ::1] o_occ = o_occ_a
    cdef cnp.int64_t[::1] o_nchg = o_nchg_a
    cdef cnp.int64_t[:, ::1] o_uptype = o_uptype_a
    cdef double[:, ::1] o_uocc = o_uocc_a
    cdef cnp.int64_t[::1] o_unchg = o_unchg_a
    r_t, r_y, r_c, r_u = [], [], [], []

    cdef double theta_tot = 0.0
    cdef int j, jj, e, i, x, y, p
    for j in range(J):
        theta_tot += th_v[j]
    cdef double* rates = <double*>malloc((E + 1) * sizeof(double))
    cdef double* srates = <double*>malloc((J + 1) * sizeof(double))
    cdef double* zn = <double*>malloc(D * sizeof(double))
    cdef double* zf = <double*>malloc(D * sizeof(double))
    cdef long long* c0 = <long long*>malloc(D * sizeof(long long))
    cdef long long* counts = <long long*>malloc(D * sizeof(long long))
    cdef double* occ = <double*>malloc(D * sizeof(double))
    cdef double* uocc = <double*>malloc(D * sizeof(double))
    cdef long rep, gnext, nchg, unchg, equal
    cdef int Y, U
    cdef long long ntot
    cdef double s, s_next, s_end, u, total, pop_total, lrate, sup, d, tdiv, lam, ylast, ulast, th, r
    cdef bint fire_k, fire_u
    try:
        for rep in range(n_reps):
            Y = y0
            U = y0
            ntot = 0
            for i in range(D):
                c0[i] = c0i[i]
                counts[i] = c0i[i]
                occ[i] = 0.0
                uocc[i] = 0.0
            counts[Y] += 1
            for i in range(D):
                ntot += counts[i]
            s = 0.0
            p = 0
            sup = 0.0
            equal = 1
            tdiv = -1.0
            lam = 0.0
            ylast = 0.0
            ulast = 0.0
            nchg = 0
            unchg = 0
            gnext = 1
            if record:
                r_t.append(0.0)
                r_y.append(Y)
                r_c.append([c0[i] for i in range(D)])
                r_u.append(U)
            while True:
                for i in range(D):
                    zn[i] = counts[i] / <double>K
                if have_flow:
                    _flow_at(fl_h, flz, fldz, s, zf, D)
                    d = _dev(counts, K, zf, D)
                    if d > sup:
                        sup = d
                pop_total = _rates(m, c0, ntot, zn, rates)
                total = pop_total
                lrate = 0.0
                for e in range(E):
                    if m.ev_parent[e] == Y and not _blocked(m, e, ntot):
                        lrate += (m.ev_size[e] - 1) * _tau(m, e, zn)
                if coupled:
                    total += theta_tot
                else:
                    for j in range(J):
                        e = jse[j]
                        srates[j] = 0.0
                        if m.ev_parent[e] == Y and not _blocked(m, e, ntot):
                            r = m.ev_k[e * D + jsy[j]] * _tau(m, e, zn)
                            if r > 0.0:
                                srates[j] = r
                        total += srates[j]
                if total > 0.0:
                    u = _next(bg)
                    s_next = s + (-log1p(-u) / total)
                else:
                    s_next = INFINITY
                s_end = s_next if s_next < t else t
                lam += lrate * (s_end - s)
                if have_flow:
                    while gnext < G and gnext * fl_h < s_end:
                        for i in range(D):
                            zf[i] = flz[gnext, i]
                        d = _dev(counts, K, zf, D)
                        if d > sup:
                            sup = d
                        gnext += 1
                    _flow_at(fl_h, flz, fldz, s_end, zf, D)
                    d = _dev(counts, K, zf, D)
                    if d > sup:
                        sup = d
                while p < P and pr[p] < s_next and pr[p] <= t:
                    o_ptype[rep, p] = Y
                    o_uptype[rep, p] = U
                    for i in range(D):
                        o_pcomp[rep, p, i] = counts[i] / <double>K
                    p += 1
                if s_next > t:
                    break
                s = s_next
                u = _next(bg) * total
                if u < pop_total:
                    e = _pick(rates, E, u)
                    x = m.ev_parent[e]
                    for i in range(D):
                        c0[i] += m.ev_k[e * D + i]
                        counts[i] += m.ev_k[e * D + i]
                    c0[x] -= 1
                    counts[x] -= 1
                    ntot += m.ev_size[e] - 1
                else:
                    u -= pop_total
                    if coupled:
                        jj = _pick(&th_v[0], J, u)
                        th = _next(bg) * th_v[jj]
                    else:
                        jj = _pick(srates, J, u)
                        th = -1.0
                    fire_k = False
                    fire_u = False
                    if jj >= 0:
                        e = jse[jj]
                        x = m.ev_parent[e]
                        y = jsy[jj]
                        if x == Y:
                            if not coupled:
                                fire_k = srates[jj] > 0.0
                            elif force_limit:
                                _flow_at(fl_h, flz, fldz, s, zf, D)
                                fire_k = th <= m.ev_k[e * D + y] * _tau(m, e, zf)
                            elif not _blocked(m, e, ntot):
                                fire_k = th <= m.ev_k[e * D + y] * _tau(m, e, zn)
                        if coupled and x == U:
                            _flow_at(fl_h, flz, fldz, s, zf, D)
                            fire_u = th <= m.ev_k[e * D + y] * _tau(m, e, zf)
                    if fire_k:
                        for i in range(D):
                            c0[i] += m.ev_k[e * D + i]
                            counts[i] += m.ev_k[e * D + i]
                        c0[y] -= 1
                        counts[x] -= 1
                        ntot += m.ev_size[e] - 1
                        if y != Y:
                            occ[Y] += s - ylast
                            ylast = s
                            nchg += 1
                            Y = y
                    if fire_u and y != U:
                        uocc[U] += s - ulast
                        ulast = s
                        unchg += 1
                        U = y
                    if coupled and equal and Y != U:
                        equal = 0
                        tdiv = s
                if record:
                    r_t.append(s)
                    r_y.append(Y)
                    r_c.append([c0[i] for i in range(D)])
                    r_u.append(U)
            occ[Y] += t - ylast
            uocc[U] += t - ulast
            o_sup[rep] = sup
            o_equal[rep] = equal
            o_tdiv[rep] = tdiv
            o_lam[rep] = lam
            o_nchg[rep] = nchg
            o_unchg[rep] = unchg
            for i in range(D):
                o_occ[rep, i] = occ[i]
                o_uocc[rep, i] = uocc[i]
    finally:
        free(rates); free(srates); free(zn); free(zf); free(c0); free(counts); free(occ); free(uocc)

    out = {
        "sup": o_sup_a,
        "equal": o_equal_a,
        "tdiv": o_tdiv_a,
        "lam": o_lam_a,
        "ptype": o_ptype_a,
        "pcomp": o_pcomp_a,
        "occ": o_occ_a,
        "nchg": o_nchg_a,
        "uptype": o_uptype_a,
        "uocc": o_uocc_a,
        "unchg": o_unchg_a,
    }
    if record:
        out.update(
            r_t=np.asarray(r_t, float),
            r_y=np.asarray(r_y, np.int64),
            r_c=np.asarray(r_c, np.int64).reshape(len(r_t), D),
            r_u=np.asarray(r_u, np.int64),
        )
    return out
