"""Numba kernels: min-sum BP, LSD-0 clustering, batch and sliding-window drivers.

Sparse structure of a check matrix H (r x N) is passed around as four arrays:

* ``chk_ptr``/``chk_mech`` -- CSR: mechanisms of each detector (edge order)
* ``mech_ptr``/``mech_chk`` -- CSC: detectors of each mechanism
* ``mech_edge`` -- for each CSC entry, the CSR edge index of the same (i, j)

GF(2) vectors over detectors are bitsets of ``uint64`` words. Pivots of the
incremental elimination are keyed by detector index; since a detector never
belongs to two clusters at once, a single global pivot table serves every
cluster and merging two clusters needs no elimination work.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LLR_CLAMP = 50.0

FAMILY_SIZE = 0
FAMILY_LLR = 1


@njit(cache=True, inline="always")
def _word_msb(x):
    # x != 0
    n = 0
    if x >> np.uint64(32):
        x >>= np.uint64(32)
        n += 32
    if x >> np.uint64(16):
        x >>= np.uint64(16)
        n += 16
    if x >> np.uint64(8):
        x >>= np.uint64(8)
        n += 8
    if x >> np.uint64(4):
        x >>= np.uint64(4)
        n += 4
    if x >> np.uint64(2):
        x >>= np.uint64(2)
        n += 2
    if x >> np.uint64(1):
        n += 1
    return n


@njit(cache=True, inline="always")
def _highest_bit(v, top):
    for w in range(top, -1, -1):
        if v[w]:
            return w * 64 + _word_msb(v[w])
    return -1


@njit(cache=True, inline="always")
def _set_bit(v, i):
    v[i >> 6] |= np.uint64(1) << np.uint64(i & 63)


@njit(cache=True, inline="always")
def _get_bit(v, i):
    return (v[i >> 6] >> np.uint64(i & 63)) & np.uint64(1)


@njit(cache=True)
def _reduce(v, pivot_of, pool, nw):
    """Reduce ``v`` in place; return the new pivot row or -1 if ``v`` -> 0."""
    top = nw - 1
    while True:
        p = _highest_bit(v, top)
        if p < 0:
            return -1
        k = pivot_of[p]
        if k < 0:
            return p
        top = p >> 6
        for w in range(top + 1):
            v[w] ^= pool[k, w]


@njit(cache=True)
def _satisfies(chk_ptr, chk_mech, x, syndrome):
    r = chk_ptr.size - 1
    for i in range(r):
        par = syndrome[i]
        for e in range(chk_ptr[i], chk_ptr[i + 1]):
            par ^= x[chk_mech[e]]
        if par:
            return False
    return True


@njit(cache=True)
def bp_min_sum(chk_ptr, chk_mech, mech_ptr, mech_edge, prior, syndrome, max_iter, scale, post, hard):
    """Flooding min-sum BP. Fills ``post``/``hard``; returns (converged, iterations)."""
    r = chk_ptr.size - 1
    n = mech_ptr.size - 1
    n_edges = chk_mech.size
    pri = np.empty(n)
    for j in range(n):
        x = prior[j]
        if x > LLR_CLAMP:
            x = LLR_CLAMP
        elif x < -LLR_CLAMP:
            x = -LLR_CLAMP
        pri[j] = x
        post[j] = x
        hard[j] = 1 if x < 0 else 0
    if _satisfies(chk_ptr, chk_mech, hard, syndrome):
        return True, 0
    v2c = np.empty(n_edges)
    c2v = np.zeros(n_edges)
    for e in range(n_edges):
        v2c[e] = pri[chk_mech[e]]
    for it in range(1, max_iter + 1):
        for i in range(r):
            lo = chk_ptr[i]
            hi = chk_ptr[i + 1]
            neg = syndrome[i] != 0
            min1 = LLR_CLAMP
            min2 = LLR_CLAMP
            amin = -1
            for e in range(lo, hi):
                x = v2c[e]
                if x < 0:
                    neg = not neg
                    x = -x
                if x < min1:
                    min2 = min1
                    min1 = x
                    amin = e
                elif x < min2:
                    min2 = x
            for e in range(lo, hi):
                mag = scale * (min2 if e == amin else min1)
                if neg != (v2c[e] < 0):
                    c2v[e] = -mag
                else:
                    c2v[e] = mag
        for j in range(n):
            total = pri[j]
            for k in range(mech_ptr[j], mech_ptr[j + 1]):
                total += c2v[mech_edge[k]]
            if total > LLR_CLAMP:
                total = LLR_CLAMP
            elif total < -LLR_CLAMP:
                total = -LLR_CLAMP
            post[j] = total
            hard[j] = 1 if total < 0 else 0
            for k in range(mech_ptr[j], mech_ptr[j + 1]):
                e = mech_edge[k]
                v2c[e] = total - c2v[e]
        if _satisfies(chk_ptr, chk_mech, hard, syndrome):
            return True, it
    return False, max_iter


@njit(cache=True)
def _find(parent, c):
    root = c
    while parent[root] != root:
        root = parent[root]
    while parent[c] != root:
        nxt = parent[c]
        parent[c] = root
        c = nxt
    return root


@njit(cache=True)
def lsd(chk_ptr, chk_mech, mech_ptr, mech_chk, syndrome, post, correction, labels, order):
    """LSD-0 clustering and per-cluster solve.

    One cluster is seeded on every violated detector. In each round-robin
    step every invalid cluster (ascending id) absorbs its unclustered
    neighbouring mechanism with the lowest posterior LLR (ties: lowest
    index); clusters sharing a detector merge into the growing one. Validity
    (local syndrome in the column span) is tracked by incremental
    elimination. Valid clusters are solved using pivot columns chosen in
    order of increasing posterior LLR.

    Writes ``correction`` (union of local solutions), ``labels`` (cluster of
    each mechanism, -1 outside clusters, numbered by smallest member) and
    ``order`` (mechanisms in the order they were added). Returns
    ``(n_clusters, n_added, ok)``; ``ok`` is False when some cluster cannot
    become valid (inconsistent syndrome).
    """
    r = chk_ptr.size - 1
    n = mech_ptr.size - 1
    nw = (r + 63) // 64
    for j in range(n):
        correction[j] = 0
        labels[j] = -1
    nc = 0
    for i in range(r):
        if syndrome[i]:
            nc += 1
    if nc == 0:
        return 0, 0, True

    check_owner = np.full(r, -1, np.int64)
    mech_owner = np.full(n, -1, np.int64)
    parent = np.arange(nc)
    valid = np.zeros(nc, np.bool_)
    chk_head = np.empty(nc, np.int64)
    chk_tail = np.empty(nc, np.int64)
    chk_next = np.full(r, -1, np.int64)
    m_head = np.full(nc, -1, np.int64)
    m_tail = np.full(nc, -1, np.int64)
    m_next = np.full(n, -1, np.int64)
    m_count = np.zeros(nc, np.int64)
    csyn = np.zeros((nc, nw), np.uint64)
    pivot_of = np.full(r, -1, np.int64)
    pool = np.empty((r, nw), np.uint64)
    npool = 0
    v = np.empty(nw, np.uint64)

    c = 0
    for i in range(r):
        if syndrome[i]:
            check_owner[i] = c
            chk_head[c] = i
            chk_tail[c] = i
            _set_bit(csyn[c], i)
            c += 1

    n_added = 0
    while True:
        grew = False
        for c in range(nc):
            if parent[c] != c or valid[c]:
                continue
            grew = True
            best = -1
            best_llr = 0.0
            i = chk_head[c]
            while i != -1:
                for e in range(chk_ptr[i], chk_ptr[i + 1]):
                    j = chk_mech[e]
                    if mech_owner[j] == -1:
                        pj = post[j]
                        if best == -1 or pj < best_llr or (pj == best_llr and j < best):
                            best = j
                            best_llr = pj
                i = chk_next[i]
            if best == -1:
                return nc, n_added, False

            mech_owner[best] = c
            if m_tail[c] == -1:
                m_head[c] = best
            else:
                m_next[m_tail[c]] = best
            m_tail[c] = best
            m_count[c] += 1
            order[n_added] = best
            n_added += 1

            for w in range(nw):
                v[w] = 0
            for k in range(mech_ptr[best], mech_ptr[best + 1]):
                q = mech_chk[k]
                _set_bit(v, q)
                o = check_owner[q]
                if o == -1:
                    check_owner[q] = c
                    chk_next[chk_tail[c]] = q
                    chk_tail[c] = q
                    if syndrome[q]:
                        _set_bit(csyn[c], q)
                else:
                    ro = _find(parent, o)
                    if ro != c:
                        parent[ro] = c
                        chk_next[chk_tail[c]] = chk_head[ro]
                        chk_tail[c] = chk_tail[ro]
                        if m_head[ro] != -1:
                            if m_tail[c] == -1:
                                m_head[c] = m_head[ro]
                            else:
                                m_next[m_tail[c]] = m_head[ro]
                            m_tail[c] = m_tail[ro]
                        m_count[c] += m_count[ro]
                        for w in range(nw):
                            csyn[c, w] |= csyn[ro, w]
            p = _reduce(v, pivot_of, pool, nw)
            if p >= 0:
                for w in range(nw):
                    pool[npool, w] = v[w]
                pivot_of[p] = npool
                npool += 1
            for w in range(nw):
                v[w] = csyn[c, w]
            valid[c] = _reduce(v, pivot_of, pool, nw) < 0
        if not grew:
            break

    # Per-cluster solve with likelihood-ordered pivot columns.
    piv2 = np.full(r, -1, np.int64)
    pool2 = np.empty((r, nw), np.uint64)
    comb = np.zeros((r, nw), np.uint64)
    sel = np.empty(r, np.int64)
    cv = np.empty(nw, np.uint64)
    nsel = 0
    for c in range(nc):
        if parent[c] != c:
            continue
        ms = np.empty(m_count[c], np.int64)
        j = m_head[c]
        t = 0
        while j != -1:
            ms[t] = j
            t += 1
            j = m_next[j]
        ms = np.sort(ms)
        ms = ms[np.argsort(post[ms], kind="mergesort")]
        for j in ms:
            for w in range(nw):
                v[w] = 0
                cv[w] = 0
            for k in range(mech_ptr[j], mech_ptr[j + 1]):
                _set_bit(v, mech_chk[k])
            top = nw - 1
            while True:
                p = _highest_bit(v, top)
                if p < 0:
                    break
                k = piv2[p]
                if k < 0:
                    for w in range(nw):
                        pool2[nsel, w] = v[w]
                        comb[nsel, w] = cv[w]
                    _set_bit(comb[nsel], nsel)
                    piv2[p] = nsel
                    sel[nsel] = j
                    nsel += 1
                    break
                top = p >> 6
                for w in range(top + 1):
                    v[w] ^= pool2[k, w]
                for w in range(nw):
                    cv[w] ^= comb[k, w]
        for w in range(nw):
            v[w] = csyn[c, w]
            cv[w] = 0
        top = nw - 1
        while True:
            p = _highest_bit(v, top)
            if p < 0:
                break
            k = piv2[p]
            if k < 0:
                return nc, n_added, False
            top = p >> 6
            for w in range(top + 1):
                v[w] ^= pool2[k, w]
            for w in range(nw):
                cv[w] ^= comb[k, w]
        for b in range(nsel):
            if _get_bit(cv, b):
                correction[sel[b]] ^= 1

    if not _satisfies(chk_ptr, chk_mech, correction, syndrome):
        return nc, n_added, False

    label_of_root = np.full(nc, -1, np.int64)
    n_out = 0
    for j in range(n):
        if mech_owner[j] != -1:
            root = _find(parent, mech_owner[j])
            if label_of_root[root] == -1:
                label_of_root[root] = n_out
                n_out += 1
            labels[j] = label_of_root[root]
    return n_out, n_added, True


@njit(cache=True)
def decode_one(chk_ptr, chk_mech, mech_ptr, mech_chk, mech_edge, prior, syndrome, max_iter, scale,
               conv_max_conf, post, hard, lsd_corr, labels, order):
    """BP, then forced LSD. Returns (converged, n_clusters, n_added, ok)."""
    converged, _ = bp_min_sum(chk_ptr, chk_mech, mech_ptr, mech_edge, prior, syndrome, max_iter, scale, post, hard)
    if converged and conv_max_conf:
        for j in range(labels.size):
            labels[j] = -1
            lsd_corr[j] = 0
        return converged, 0, 0, True
    n_clusters, n_added, ok = lsd(chk_ptr, chk_mech, mech_ptr, mech_chk, syndrome, post, lsd_corr, labels, order)
    return converged, n_clusters, n_added, ok


@njit(cache=True)
def decode_batch(chk_ptr, chk_mech, mech_ptr, mech_chk, mech_edge, prior, syndromes, max_iter, scale,
                 conv_max_conf, corrections, converged, labels):
    """Decode every row of ``syndromes``. Returns the first failing row or -1."""
    n = mech_ptr.size - 1
    post = np.empty(n)
    hard = np.empty(n, np.uint8)
    lsd_corr = np.empty(n, np.uint8)
    order = np.empty(n, np.int64)
    for s in range(syndromes.shape[0]):
        conv, _, _, ok = decode_one(chk_ptr, chk_mech, mech_ptr, mech_chk, mech_edge, prior, syndromes[s],
                                    max_iter, scale, conv_max_conf, post, hard, lsd_corr, labels[s], order)
        if not ok:
            return s
        converged[s] = conv
        if conv:
            corrections[s, :] = hard
        else:
            corrections[s, :] = lsd_corr
    return -1


@njit(cache=True)
def _norm_fraction(values, count, alpha, denom):
    if count == 0 or denom == 0.0:
        return 0.0
    if np.isinf(alpha):
        best = 0.0
        for i in range(count):
            if values[i] > best:
                best = values[i]
        return best / denom
    acc = 0.0
    for i in range(count):
        acc += (values[i] / denom) ** alpha
    return acc ** (1.0 / alpha)


@njit(cache=True)
def realtime_batch(
    # window plan, flattened with per-window offsets
    w_det_ptr, w_dets, w_mech_ptr, w_mechs, w_commit,
    w_cptr_off, w_cptr, w_mptr_off, w_mptr, w_edge_off, w_chk_mech, w_mech_chk, w_mech_edge,
    # global structure
    g_mech_ptr, g_mech_chk, llr, restrict, commit_cnt, commit_mass,
    syndromes, max_iter, scale, conv_max_conf, lookback, families, alphas,
    corrections, q_out, ok_out,
):
    """Sliding-window decode of each shot, recording real-time post-selection metrics.

    Checkpoints follow every window ``w >= lookback - 1`` plus the final
    window; ``q_out[s, ck, m]`` is metric m at checkpoint ck. Window priors
    are the global priors restricted to each window's mechanisms.
    """
    n_windows = w_det_ptr.size - 1
    n_glob = g_mech_ptr.size - 1
    r_glob = syndromes.shape[1]
    n_metrics = families.size
    max_nw = 0
    max_rw = 0
    for w in range(n_windows):
        max_nw = max(max_nw, w_mech_ptr[w + 1] - w_mech_ptr[w])
        max_rw = max(max_rw, w_det_ptr[w + 1] - w_det_ptr[w])
    post = np.empty(max_nw)
    hard = np.empty(max_nw, np.uint8)
    lsd_corr = np.empty(max_nw, np.uint8)
    labels = np.empty(max_nw, np.int64)
    order = np.empty(max_nw, np.int64)
    prior = np.empty(max_nw)
    syn_w = np.empty(max_rw, np.uint8)
    s_res = np.empty(r_glob, np.uint8)
    inside_ptr = np.zeros(n_windows + 1, np.int64)
    inside = np.empty(n_glob, np.int64)
    uf = np.arange(n_glob)
    det_rep = np.full(r_glob, -1, np.int64)
    comp_size = np.zeros(n_glob)
    comp_mass = np.zeros(n_glob)
    comp_vals = np.empty(n_glob)
    roots = np.empty(n_glob, np.int64)
    root_seen = np.zeros(n_glob, np.bool_)

    for s in range(syndromes.shape[0]):
        for i in range(r_glob):
            s_res[i] = syndromes[s, i]
        for j in range(n_glob):
            corrections[s, j] = 0
        ok_out[s] = True
        ck = 0
        n_inside = 0
        for w in range(n_windows):
            d0 = w_det_ptr[w]
            d1 = w_det_ptr[w + 1]
            m0 = w_mech_ptr[w]
            m1 = w_mech_ptr[w + 1]
            nw_m = m1 - m0
            for k in range(d1 - d0):
                syn_w[k] = s_res[w_dets[d0 + k]]
            for k in range(nw_m):
                prior[k] = llr[w_mechs[m0 + k]]
            cp = w_cptr[w_cptr_off[w]:w_cptr_off[w + 1]]
            cm = w_chk_mech[w_edge_off[w]:w_edge_off[w + 1]]
            mp = w_mptr[w_mptr_off[w]:w_mptr_off[w + 1]]
            mc = w_mech_chk[w_edge_off[w]:w_edge_off[w + 1]]
            me = w_mech_edge[w_edge_off[w]:w_edge_off[w + 1]]
            conv, _, _, ok = decode_one(cp, cm, mp, mc, me, prior[:nw_m], syn_w[:d1 - d0], max_iter, scale,
                                        conv_max_conf, post[:nw_m], hard[:nw_m], lsd_corr[:nw_m], labels[:nw_m],
                                        order[:nw_m])
            if not ok:
                ok_out[s] = False
                break
            final = w == n_windows - 1
            inside_ptr[w] = n_inside
            for k in range(nw_m):
                if not (final or w_commit[m0 + k]):
                    continue
                g = w_mechs[m0 + k]
                bit = hard[k] if conv else lsd_corr[k]
                if bit:
                    corrections[s, g] ^= 1
                    for e in range(g_mech_ptr[g], g_mech_ptr[g + 1]):
                        s_res[g_mech_chk[e]] ^= 1
                if labels[k] >= 0:
                    inside[n_inside] = g
                    n_inside += 1
            inside_ptr[w + 1] = n_inside
            if w < lookback - 1 and not final:
                continue
            lo = max(0, w - lookback + 1)
            a = inside_ptr[lo]
            b = inside_ptr[w + 1]
            # components of the inside set, joined through shared detectors
            for t in range(a, b):
                g = inside[t]
                uf[g] = g
            for t in range(a, b):
                g = inside[t]
                for e in range(g_mech_ptr[g], g_mech_ptr[g + 1]):
                    d = g_mech_chk[e]
                    rep = det_rep[d]
                    if rep == -1:
                        det_rep[d] = g
                    else:
                        ra = _find(uf, g)
                        rb = _find(uf, rep)
                        if ra != rb:
                            if ra < rb:
                                uf[rb] = ra
                            else:
                                uf[ra] = rb
            n_roots = 0
            for t in range(a, b):
                g = inside[t]
                for e in range(g_mech_ptr[g], g_mech_ptr[g + 1]):
                    det_rep[g_mech_chk[e]] = -1
                if not restrict[g]:
                    continue
                root = _find(uf, g)
                if not root_seen[root]:
                    root_seen[root] = True
                    roots[n_roots] = root
                    n_roots += 1
                comp_size[root] += 1.0
                comp_mass[root] += llr[g]
            d_cnt = 0.0
            d_mass = 0.0
            for u in range(lo, w + 1):
                d_cnt += commit_cnt[u]
                d_mass += commit_mass[u]
            for mi in range(n_metrics):
                for t in range(n_roots):
                    if families[mi] == FAMILY_SIZE:
                        comp_vals[t] = comp_size[roots[t]]
                    else:
                        comp_vals[t] = comp_mass[roots[t]]
                denom = d_cnt if families[mi] == FAMILY_SIZE else d_mass
                q_out[s, ck, mi] = _norm_fraction(comp_vals, n_roots, alphas[mi], denom)
            for t in range(n_roots):
                comp_size[roots[t]] = 0.0
                comp_mass[roots[t]] = 0.0
                root_seen[roots[t]] = False
            ck += 1
    return 0
