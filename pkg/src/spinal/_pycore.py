"""Pure-Python reference kernels.

These mirror ``_core.pyx`` statement for statement: same random draws in the
same order, same floating-point operation order.  For a given generator
state both produce bit-identical output.
"""

import math

import numpy as np


def _tau(cm, e, z):
    tot = 0.0
    for t in range(cm.term_ptr[e], cm.term_ptr[e + 1]):
        v = cm.term_coef[t]
        for i in range(cm.D):
            for _ in range(cm.term_exp[t, i]):
                v *= z[i]
        tot += v
    return tot


def _rates(cm, counts, ntot, zn, rates):
    """Per-event total rates ``count_x * tau_k(x, z/K)``; returns their sum."""
    total = 0.0
    for e in range(cm.E):
        x = cm.ev_parent[e]
        if counts[x] == 0 or (cm.guard and ntot + cm.ev_size[e] - 1 > cm.K):
            rates[e] = 0.0
        else:
            r = counts[x] * _tau(cm, e, zn)
            if r < 0.0:
                r = 0.0
            rates[e] = r
        total += rates[e]
    return total


def _pick(rates, n, u):
    """Index selected by ``u`` in the cumulative sums; rounding falls back to the last positive entry."""
    acc = 0.0
    last = -1
    for e in range(n):
        if rates[e] > 0.0:
            last = e
            acc += rates[e]
            if u < acc:
                return e
    return last


def pop_batch(cm, init, T, probes, n_reps, rng, record=False):
    """Gillespie simulation of ``n_reps`` independent populations on ``[0, T]``.

    Every individual alive at ``T`` is reported with forward-inherited
    lineage summaries: root index, time spent in each type, number of type
    changes along the ancestry, and lineage type at each probe time.
    With ``record`` (single replica) the full arena of individuals and the
    composition jump list are returned as well.
    """
    D, K, E = cm.D, cm.K, cm.E
    P = len(probes)
    init = [int(v) for v in init]
    n0 = sum(init)
    cap = n_reps * K
    o_rep = np.zeros(cap, np.int64)
    o_type = np.zeros(cap, np.int64)
    o_root = np.zeros(cap, np.int64)
    o_occ = np.zeros((cap, D))
    o_nchg = np.zeros(cap, np.int64)
    o_ptype = np.zeros((cap, P), np.int64)
    o_aid = np.zeros(cap, np.int64)
    zprobe = np.zeros((n_reps, P, D), np.int64)
    nevents = np.zeros(n_reps, np.int64)
    a_type, a_birth, a_death, a_parent, a_rank = [], [], [], [], []
    j_t, j_z = [], []
    rates = [0.0] * E
    nout = 0

    for rep in range(n_reps):
        counts = list(init)
        ntot = n0
        s_type = [0] * K
        s_root = [0] * K
        s_birth = [0.0] * K
        s_occ = [[0.0] * D for _ in range(K)]
        s_nchg = [0] * K
        s_probe = [[0] * P for _ in range(K)]
        s_aid = [0] * K
        tlist = [[0] * K for _ in range(D)]
        tpos = [0] * K
        free = list(range(K - 1, -1, -1))
        for sl in range(n0):
            free.pop()
        sl = 0
        for x in range(D):
            for i in range(init[x]):
                s_type[sl] = x
                s_root[sl] = sl
                s_birth[sl] = 0.0
                tlist[x][i] = sl
                tpos[sl] = i
                if record:
                    s_aid[sl] = len(a_type)
                    a_type.append(x)
                    a_birth.append(0.0)
                    a_death.append(math.nan)
                    a_parent.append(-1)
                    a_rank.append(sl)
                sl += 1
        if record:
            j_t.append(0.0)
            j_z.append(list(counts))

        s = 0.0
        p = 0
        zn = [0.0] * D
        nev = 0
        while True:
            for i in range(D):
                zn[i] = counts[i] / K
            total = _rates(cm, counts, ntot, zn, rates)
            if total > 0.0:
                u = rng.random()
                s_next = s + (-math.log1p(-u) / total)
            else:
                s_next = math.inf
            while p < P and probes[p] < s_next and probes[p] <= T:
                for x in range(D):
                    zprobe[rep, p, x] = counts[x]
                    for i in range(counts[x]):
                        s_probe[tlist[x][i]][p] = x
                p += 1
            if s_next > T:
                break
            s = s_next
            nev += 1
            # choose the event
            u = rng.random() * total
            e = _pick(rates, E, u)
            x = cm.ev_parent[e]
            i = int(rng.random() * counts[x])
            if i >= counts[x]:
                i = counts[x] - 1
            par = tlist[x][i]
            p_root = s_root[par]
            p_nchg = s_nchg[par]
            p_aid = s_aid[par]
            p_probe = list(s_probe[par])
            pocc = list(s_occ[par])
            pocc[x] += s - s_birth[par]
            # remove the parent from its type list (swap-remove)
            last = tlist[x][counts[x] - 1]
            tlist[x][i] = last
            tpos[last] = i
            counts[x] -= 1
            ntot -= 1
            free.append(par)
            # offspring types in type order, shuffled when labels matter
            kids = []
            for y in range(D):
                for _ in range(cm.ev_k[e, y]):
                    kids.append(y)
            nk = len(kids)
            if record:
                for a in range(nk - 1, 0, -1):
                    b = int(rng.random() * (a + 1))
                    if b > a:
                        b = a
                    kids[a], kids[b] = kids[b], kids[a]
                a_death[p_aid] = s
            for r in range(nk):
                y = kids[r]
                sl = free.pop()
                s_type[sl] = y
                s_root[sl] = p_root
                s_birth[sl] = s
                s_occ[sl] = list(pocc)
                s_nchg[sl] = p_nchg + (1 if y != x else 0)
                s_probe[sl] = list(p_probe)
                tlist[y][counts[y]] = sl
                tpos[sl] = counts[y]
                counts[y] += 1
                ntot += 1
                if record:
                    s_aid[sl] = len(a_type)
                    a_type.append(y)
                    a_birth.append(s)
                    a_death.append(math.nan)
                    a_parent.append(p_aid)
                    a_rank.append(r)
            if record:
                j_t.append(s)
                j_z.append(list(counts))
        nevents[rep] = nev
        for x in range(D):
            for i in range(counts[x]):
                sl = tlist[x][i]
                o_rep[nout] = rep
                o_type[nout] = x
                o_root[nout] = s_root[sl]
                for y in range(D):
                    o_occ[nout, y] = s_occ[sl][y]
                o_occ[nout, x] += T - s_birth[sl]
                o_nchg[nout] = s_nchg[sl]
                for q in range(P):
                    o_ptype[nout, q] = s_probe[sl][q]
                o_aid[nout] = s_aid[sl]
                nout += 1

    out = {
        "rep": o_rep[:nout],
        "type": o_type[:nout],
        "root": o_root[:nout],
        "occ": o_occ[:nout],
        "nchg": o_nchg[:nout],
        "ptype": o_ptype[:nout],
        "zprobe": zprobe,
        "nevents": nevents,
    }
    if record:
        out.update(
            aid=o_aid[:nout],
            a_type=np.asarray(a_type, np.int64),
            a_birth=np.asarray(a_birth, float),
            a_death=np.asarray(a_death, float),
            a_parent=np.asarray(a_parent, np.int64),
            a_rank=np.asarray(a_rank, np.int64),
            j_t=np.asarray(j_t, float),
            j_z=np.asarray(j_z, np.int64).reshape(len(j_t), D),
        )
    return out


# --------------------------------------------------------------------------
# homogeneous spine over {0,1} x types, optionally coupled to the limit spine


def _flow_at(fl_h, fl_z, fl_dz, s, out, D):
    """Cubic Hermite interpolation of the flow on a uniform grid."""
    M = fl_z.shape[0] - 1
    c = int(s / fl_h)
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


def _dev(counts, K, zf, D):
    d = 0.0
    for i in range(D):
        d += abs(counts[i] / K - zf[i])
    return d


def star_batch(cm, c0_init, y0, t, probes, n_reps, rng, js_event, js_y, theta,
               fl_h, fl_z, fl_dz, coupled, force_limit, record=False):
    """Finite-K homogeneous spine (psi = 1) over {0,1} x types.

    Non-spine individuals reproduce at their original rates; the spine of
    type x is replaced by offspring k and becomes type y at rate
    ``k_y tau_k(x, zeta)``.  With ``coupled`` the spine channels are driven
    by dominating Poisson streams of rates ``theta`` whose marks also drive
    the limit spine against the flow.  The sup deviation between the
    projected composition and the flow is tracked whenever a flow is given
    (``fl_h > 0``).
    """
    D, K, E = cm.D, cm.K, cm.E
    P = len(probes)
    J = len(js_event)
    have_flow = fl_h > 0.0
    o_sup = np.zeros(n_reps)
    o_equal = np.zeros(n_reps, np.int64)
    o_tdiv = np.full(n_reps, -1.0)
    o_lam = np.zeros(n_reps)
    o_ptype = np.zeros((n_reps, P), np.int64)
    o_pcomp = np.zeros((n_reps, P, D))
    o_occ = np.zeros((n_reps, D))
    o_nchg = np.zeros(n_reps, np.int64)
    o_uptype = np.zeros((n_reps, P), np.int64)
    o_uocc = np.zeros((n_reps, D))
    o_unchg = np.zeros(n_reps, np.int64)
    r_t, r_y, r_c, r_u = [], [], [], []
    theta_tot = 0.0
    for j in range(J):
        theta_tot += theta[j]
    rates = [0.0] * E
    srates = [0.0] * J
    zn = [0.0] * D
    zf = [0.0] * D
    G = fl_z.shape[0]

    for rep in range(n_reps):
        c0 = [int(v) for v in c0_init]
        Y = y0
        U = y0
        counts = list(c0)
        counts[Y] += 1
        ntot = 0
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
        occ = [0.0] * D
        uocc = [0.0] * D
        nchg = 0
        unchg = 0
        gnext = 1
        if record:
            r_t.append(0.0)
            r_y.append(Y)
            r_c.append(list(c0))
            r_u.append(U)
        while True:
            for i in range(D):
                zn[i] = counts[i] / K
            if have_flow:
                _flow_at(fl_h, fl_z, fl_dz, s, zf, D)
                d = _dev(counts, K, zf, D)
                if d > sup:
                    sup = d
            pop_total = _rates(cm, c0, ntot, zn, rates)
            total = pop_total
            lrate = 0.0
            for e in range(E):
                if cm.ev_parent[e] == Y and not (cm.guard and ntot + cm.ev_size[e] - 1 > K):
                    lrate += (cm.ev_size[e] - 1) * _tau(cm, e, zn)
            if coupled:
                total += theta_tot
            else:
                for j in range(J):
                    e = js_event[j]
                    srates[j] = 0.0
                    if cm.ev_parent[e] == Y and not (cm.guard and ntot + cm.ev_size[e] - 1 > K):
                        r = cm.ev_k[e, js_y[j]] * _tau(cm, e, zn)
                        if r > 0.0:
                            srates[j] = r
                    total += srates[j]
            if total > 0.0:
                u = rng.random()
                s_next = s + (-math.log1p(-u) / total)
            else:
                s_next = math.inf
            s_end = s_next if s_next < t else t
            lam += lrate * (s_end - s)
            if have_flow:
                while gnext < G and gnext * fl_h < s_end:
                    for i in range(D):
                        zf[i] = fl_z[gnext, i]
                    d = _dev(counts, K, zf, D)
                    if d > sup:
                        sup = d
                    gnext += 1
                _flow_at(fl_h, fl_z, fl_dz, s_end, zf, D)
                d = _dev(counts, K, zf, D)
                if d > sup:
                    sup = d
            while p < P and probes[p] < s_next and probes[p] <= t:
                o_ptype[rep, p] = Y
                o_uptype[rep, p] = U
                for i in range(D):
                    o_pcomp[rep, p, i] = counts[i] / K
                p += 1
            if s_next > t:
                break
            s = s_next
            u = rng.random() * total
            if u < pop_total:
                e = _pick(rates, E, u)
                x = cm.ev_parent[e]
                for i in range(D):
                    c0[i] += cm.ev_k[e, i]
                    counts[i] += cm.ev_k[e, i]
                c0[x] -= 1
                counts[x] -= 1
                ntot += cm.ev_size[e] - 1
            else:
                u -= pop_total
                if coupled:
                    jj = _pick(theta, J, u)
                    th = rng.random() * theta[jj]
                else:
                    jj = _pick(srates, J, u)
                    th = -1.0
                fire_k = False
                fire_u = False
                if jj >= 0:
                    e = js_event[jj]
                    x = cm.ev_parent[e]
                    y = js_y[jj]
                    if x == Y:
                        if not coupled:
                            fire_k = srates[jj] > 0.0
                        elif force_limit:
                            _flow_at(fl_h, fl_z, fl_dz, s, zf, D)
                            fire_k = th <= cm.ev_k[e, y] * _tau(cm, e, zf)
                        elif not (cm.guard and ntot + cm.ev_size[e] - 1 > K):
                            fire_k = th <= cm.ev_k[e, y] * _tau(cm, e, zn)
                    if coupled and x == U:
                        _flow_at(fl_h, fl_z, fl_dz, s, zf, D)
                        fire_u = th <= cm.ev_k[e, y] * _tau(cm, e, zf)
                if fire_k:
                    for i in range(D):
                        c0[i] += cm.ev_k[e, i]
                        counts[i] += cm.ev_k[e, i]
                    c0[y] -= 1
                    counts[x] -= 1
                    ntot += cm.ev_size[e] - 1
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
                r_c.append(list(c0))
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

    out = {
        "sup": o_sup,
        "equal": o_equal,
        "tdiv": o_tdiv,
        "lam": o_lam,
        "ptype": o_ptype,
        "pcomp": o_pcomp,
        "occ": o_occ,
        "nchg": o_nchg,
        "uptype": o_uptype,
        "uocc": o_uocc,
        "unchg": o_unchg,
    }
    if record:
        out.update(
            r_t=np.asarray(r_t, float),
            r_y=np.asarray(r_y, np.int64),
            r_c=np.asarray(r_c, np.int64).reshape(len(r_t), D),
            r_u=np.asarray(r_u, np.int64),
        )
    return out
