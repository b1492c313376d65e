"""Hot inner loops of the partial double description method.

Each kernel exists twice: a loop version compiled with numba and a
vectorised numpy version. ``shoot_pairs`` and ``a_irredundant_order``
dispatch on :func:`polyrelax._accel.use_numba`; the ``*_numpy`` and
``*_numba`` variants are importable directly for testing and benchmarks.
"""
import itertools

import numpy as np

from ._accel import njit, use_numba

# --------------------------------------------------------------------------
# ray shooting


@njit
def _shoot_pairs_jit(rays, vals, src, dst, tol):
    n_src = src.shape[0]
    n_dst = dst.shape[0]
    q = vals.shape[1]
    D = rays.shape[1]
    n = n_src * n_dst
    out = np.empty((n, D))
    hit = np.full(n, -1, dtype=np.int64)
    step = np.full(n, np.inf)
    k = 0
    for a in range(n_src):
        s = src[a]
        for b in range(n_dst):
            m = dst[b]
            best = np.inf
            best_j = -1
            blocked = False
            for j in range(q):
                vm = vals[m, j]
                if vm < -tol:
                    vs = vals[s, j]
                    if vs <= tol:
                        blocked = True
                        break
                    t = vs / (vs - vm)
                    if t < best:
                        best = t
                        best_j = j
            if not blocked and best_j >= 0:
                for c in range(D):
                    out[k, c] = (1.0 - best) * rays[s, c] + best * rays[m, c]
                hit[k] = best_j
                step[k] = best
            else:
                for c in range(D):
                    out[k, c] = 0.0
            k += 1
    return out, hit, step


def shoot_pairs_numba(rays, vals, src, dst, tol):
    return _shoot_pairs_jit(
        np.ascontiguousarray(rays, dtype=np.float64),
        np.ascontiguousarray(vals, dtype=np.float64),
        np.ascontiguousarray(src, dtype=np.int64),
        np.ascontiguousarray(dst, dtype=np.int64),
        float(tol),
    )


def shoot_pairs_numpy(rays, vals, src, dst, tol, chunk=64):
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    D = rays.shape[1]
    outs, hits, steps = [], [], []
    vm = vals[dst]  # (M, q)
    violated = vm < -tol
    for start in range(0, len(src), chunk):
        s_idx = src[start:start + chunk]
        vs = vals[s_idx][:, None, :]  # (S, 1, q)
        blocked = (violated[None, :, :] & (vs <= tol)).any(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(violated[None, :, :], vs / (vs - vm[None, :, :]), np.inf)
        best_j = np.argmin(t, axis=2)
        best = np.take_along_axis(t, best_j[:, :, None], axis=2)[:, :, 0]
        ok = ~blocked & np.isfinite(best)
        r_s = rays[s_idx][:, None, :]
        r_m = rays[dst][None, :, :]
        tt = np.where(ok, best, 0.0)[:, :, None]
        pts = (1.0 - tt) * r_s + tt * r_m
        pts[~ok] = 0.0
        outs.append(pts.reshape(-1, D))
        hits.append(np.where(ok, best_j, -1).reshape(-1))
        steps.append(np.where(ok, best, np.inf).reshape(-1))
    if not outs:
        return np.empty((0, D)), np.empty(0, dtype=np.int64), np.empty(0)
    return np.concatenate(outs), np.concatenate(hits).astype(np.int64), np.concatenate(steps)


def shoot_pairs(rays, vals, src, dst, tol):
    """First crossing of every segment ``rays[s] -> rays[m]`` with the added constraints.

    Parameters
    ----------
    rays : (n, D) array
    vals : (n, q) array
        ``rays @ added.T``.
    src, dst : int arrays
        Source (feasible) and destination (violating) ray indices. Pairs are
        enumerated source-major.
    tol : float
        Equality band; a destination value below ``-tol`` counts as violated.

    Returns
    -------
    points : (len(src)*len(dst), D) array
        Crossing points; rows for pairs without a valid crossing are zero.
    hit : int array
        Index of the first constraint hit, ``-1`` where no valid crossing.
    step : float array
        Segment parameter of the crossing, ``inf`` where no valid crossing.

    A source that is already tight on a constraint the destination violates
    is blocked (the crossing would be the source itself).
    """
    if len(src) == 0 or len(dst) == 0:
        D = rays.shape[1]
        return np.empty((0, D)), np.empty(0, dtype=np.int64), np.empty(0)
    if use_numba():
        return shoot_pairs_numba(rays, vals, src, dst, tol)
    return shoot_pairs_numpy(rays, vals, src, dst, tol)


# --------------------------------------------------------------------------
# segment clipping


@njit
def _clip_pairs_jit(rays, vals, tol, eps):
    n = vals.shape[0]
    q = vals.shape[1]
    D = rays.shape[1]
    viol = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        for c in range(q):
            if vals[i, c] < -tol:
                viol[i] = True
                break
    cap = 256
    out = np.empty((cap, D))
    hit = np.empty(cap, dtype=np.int64)
    par = np.empty((cap, 2), dtype=np.int64)
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            if not (viol[i] or viol[j]):
                continue
            tlo = 0.0
            thi = 1.0
            jlo = -1
            jhi = -1
            empty = False
            for c in range(q):
                a = vals[i, c]
                b = vals[j, c]
                if a >= -tol and b >= -tol:
                    continue
                if a < -tol and b < -tol:
                    empty = True
                    break
                t = a / (a - b)
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                if a < -tol:
                    if t > tlo:
                        tlo = t
                        jlo = c
                elif t < thi:
                    thi = t
                    jhi = c
                if tlo > thi + eps:
                    empty = True
                    break
            if empty:
                continue
            for side in range(2):
                if side == 0:
                    t = tlo
                    c = jlo
                else:
                    t = thi
                    c = jhi
                    if jlo >= 0 and thi - tlo <= eps:
                        continue
                if c < 0:
                    continue
                if k == cap:
                    cap *= 2
                    o2 = np.empty((cap, D))
                    o2[:k] = out[:k]
                    out = o2
                    h2 = np.empty(cap, dtype=np.int64)
                    h2[:k] = hit[:k]
                    hit = h2
                    p2 = np.empty((cap, 2), dtype=np.int64)
                    p2[:k] = par[:k]
                    par = p2
                for d in range(D):
                    out[k, d] = (1.0 - t) * rays[i, d] + t * rays[j, d]
                hit[k] = c
                par[k, 0] = i
                par[k, 1] = j
                k += 1
    return out[:k].copy(), hit[:k].copy(), par[:k].copy()


def clip_pairs_numba(rays, vals, tol, eps=1e-13):
    return _clip_pairs_jit(
        np.ascontiguousarray(rays, dtype=np.float64),
        np.ascontiguousarray(vals, dtype=np.float64),
        float(tol),
        float(eps),
    )


def clip_pairs_numpy(rays, vals, tol, eps=1e-13):
    n, q = vals.shape
    D = rays.shape[1]
    viol = (vals < -tol).any(axis=1)
    outs, hits, pars = [], [], []
    for i in range(n - 1):
        js = np.arange(i + 1, n)
        js = js[viol[i] | viol[js]]
        if len(js) == 0:
            continue
        a = vals[i][None, :]
        b = vals[js]
        bad_a = a < -tol
        bad_b = b < -tol
        empty = (bad_a & bad_b).any(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.clip(a / (a - b), 0.0, 1.0)
        t_enter = np.where(bad_a & ~bad_b, t, -np.inf)
        t_leave = np.where(bad_b & ~bad_a, t, np.inf)
        jlo = np.argmax(t_enter, axis=1)
        jhi = np.argmin(t_leave, axis=1)
        tlo = np.take_along_axis(t_enter, jlo[:, None], axis=1)[:, 0]
        thi = np.take_along_axis(t_leave, jhi[:, None], axis=1)[:, 0]
        has_lo = np.isfinite(tlo) & (tlo > 0.0)
        has_hi = np.isfinite(thi) & (thi < 1.0)
        tlo = np.where(has_lo, tlo, 0.0)
        thi = np.where(has_hi, thi, 1.0)
        ok = ~empty & (tlo <= thi + eps)
        second = has_hi & ~(has_lo & (thi - tlo <= eps))
        for t_sel, j_sel, use in ((tlo, jlo, ok & has_lo), (thi, jhi, ok & second)):
            if not use.any():
                continue
            tt = t_sel[use][:, None]
            outs.append((1.0 - tt) * rays[i][None, :] + tt * rays[js[use]])
            hits.append(j_sel[use])
            pars.append(np.column_stack([np.full(use.sum(), i), js[use]]))
    if not outs:
        return np.empty((0, D)), np.empty(0, dtype=np.int64), np.empty((0, 2), dtype=np.int64)
    # restore the pair-major order of the compiled kernel
    out = np.concatenate(outs)
    hit = np.concatenate(hits).astype(np.int64)
    par = np.concatenate(pars).astype(np.int64)
    order = np.lexsort((np.arange(len(par)), par[:, 1], par[:, 0]))
    return out[order], hit[order], par[order]


def clip_pairs(rays, vals, tol, eps=1e-13):
    """Clip the segment between every pair of rays to the added constraints.

    Parameters
    ----------
    rays : (n, D) array
    vals : (n, q) array
        ``rays @ added.T``.
    tol : float
        A value below ``-tol`` counts as a violation.

    Returns
    -------
    points : (m, D) array
        Endpoints of the clipped segments that lie on an added hyperplane
        (at most two per pair, pair-major order ``i < j``). Pairs of rays
        that both satisfy the added rows are skipped.
    hit : (m,) int array
        The added row that is active at each point.
    parents : (m, 2) int array
    """
    if len(rays) < 2 or vals.shape[1] == 0:
        D = rays.shape[1]
        return np.empty((0, D)), np.empty(0, dtype=np.int64), np.empty((0, 2), dtype=np.int64)
    if use_numba():
        return clip_pairs_numba(rays, vals, tol, eps)
    return clip_pairs_numpy(rays, vals, tol, eps)


# --------------------------------------------------------------------------
# points on 2-faces


@njit
def _face_triples_jit(inc, viol, min_common):
    n, m = inc.shape
    count = 0
    for i in range(n - 2):
        for j in range(i + 1, n - 1):
            for k in range(j + 1, n):
                if not (viol[i] or viol[j] or viol[k]):
                    continue
                c = 0
                for r in range(m):
                    if inc[i, r] and inc[j, r] and inc[k, r]:
                        c += 1
                if c >= min_common:
                    count += 1
    out = np.empty((count, 3), dtype=np.int64)
    pos = 0
    for i in range(n - 2):
        for j in range(i + 1, n - 1):
            for k in range(j + 1, n):
                if not (viol[i] or viol[j] or viol[k]):
                    continue
                c = 0
                for r in range(m):
                    if inc[i, r] and inc[j, r] and inc[k, r]:
                        c += 1
                if c >= min_common:
                    out[pos, 0] = i
                    out[pos, 1] = j
                    out[pos, 2] = k
                    pos += 1
    return out


@njit
def _face_points_jit(rays, vals, triples, tol):
    q = vals.shape[1]
    D = rays.shape[1]
    npairs = q * (q - 1) // 2
    pts = np.empty((len(triples) * npairs, D))
    pos = 0
    al = np.empty(3)
    for t in range(len(triples)):
        a, b, c = triples[t, 0], triples[t, 1], triples[t, 2]
        for s in range(q - 1):
            for u in range(s + 1, q):
                # coefficients of the combination vanishing on rows s and u
                al[0] = vals[b, s] * vals[c, u] - vals[c, s] * vals[b, u]
                al[1] = vals[c, s] * vals[a, u] - vals[a, s] * vals[c, u]
                al[2] = vals[a, s] * vals[b, u] - vals[b, s] * vals[a, u]
                big = max(abs(al[0]), abs(al[1]), abs(al[2]), 1e-300)
                pos_ok = True
                neg_ok = True
                for h in range(3):
                    al[h] /= big
                    if al[h] < -1e-12:
                        pos_ok = False
                    if al[h] > 1e-12:
                        neg_ok = False
                if not (pos_ok or neg_ok):
                    continue
                if neg_ok and not pos_ok:
                    for h in range(3):
                        al[h] = -al[h]
                ok = True
                for r in range(q):
                    if al[0] * vals[a, r] + al[1] * vals[b, r] + al[2] * vals[c, r] < -tol:
                        ok = False
                        break
                if not ok:
                    continue
                nrm = 0.0
                for d in range(D):
                    x = al[0] * rays[a, d] + al[1] * rays[b, d] + al[2] * rays[c, d]
                    pts[pos, d] = x
                    nrm += x * x
                if np.sqrt(nrm) > 1e-9:
                    pos += 1
    return pts[:pos]


def _face_inputs(rays, constraints, vals, tol):
    inc = np.abs(rays @ constraints.T) <= tol
    viol = (vals < -tol).any(axis=1)
    return inc, viol, rays.shape[1] - 3


def face_points_numba(rays, constraints, vals, tol):
    rays = np.ascontiguousarray(rays, dtype=np.float64)
    vals = np.ascontiguousarray(vals, dtype=np.float64)
    inc, viol, need = _face_inputs(rays, constraints, vals, tol)
    triples = _face_triples_jit(np.ascontiguousarray(inc), viol, need)
    return _face_points_jit(rays, vals, triples, float(tol))


def face_points_numpy(rays, constraints, vals, tol, chunk=4096):
    inc, viol, need = _face_inputs(rays, constraints, vals, tol)
    n, q = vals.shape
    D = rays.shape[1]
    i, j, k = np.array(list(itertools.combinations(range(n), 3)), dtype=np.int64).reshape(-1, 3).T
    keep = (viol[i] | viol[j] | viol[k]) & ((inc[i] & inc[j] & inc[k]).sum(axis=1) >= need)
    T = np.column_stack([i, j, k])[keep]
    P = np.array(list(itertools.combinations(range(q), 2)), dtype=np.int64)
    out = []
    for start in range(0, len(T), chunk):
        M = vals[T[start:start + chunk]]  # (t, 3, q)
        al = np.cross(M[:, :, P[:, 0]], M[:, :, P[:, 1]], axis=1)
        al = np.moveaxis(al, 1, 2)  # (t, pairs, 3)
        al = al / np.maximum(np.abs(al).max(axis=-1, keepdims=True), 1e-300)
        pos = (al >= -1e-12).all(axis=-1)
        neg = (al <= 1e-12).all(axis=-1)
        al = np.where((neg & ~pos)[..., None], -al, al)
        ok = (pos | neg) & (np.einsum("tpk,tkq->tpq", al, M) >= -tol).all(axis=-1)
        pts = np.einsum("tpk,tkd->tpd", al, rays[T[start:start + chunk]])[ok]
        out.append(pts[np.linalg.norm(pts, axis=1) > 1e-9])
    return np.concatenate(out) if out else np.empty((0, D))


def face_points(rays, constraints, vals, tol):
    """Points on 2-faces of a cone where two added rows are active.

    Every triple of rays sharing at least ``D - 3`` active constraints spans
    a candidate 2-face. For each pair of added rows the unique combination
    of the triple vanishing on both is kept if its coefficients share one
    sign and it satisfies all added rows.

    Parameters
    ----------
    rays : (n, D) array
    constraints : (m, D) array
        Constraints of the cone, for the incidence test.
    vals : (n, q) array
        ``rays @ added.T``.
    tol : float

    Returns
    -------
    (p, D) array in triple-major, then row-pair order.
    """
    D = rays.shape[1]
    if len(rays) < 3 or vals.shape[1] < 2:
        return np.empty((0, D))
    if use_numba():
        return face_points_numba(rays, constraints, vals, tol)
    return face_points_numpy(rays, constraints, vals, tol)


# --------------------------------------------------------------------------
# A-irredundancy


def pack_rows(inc):
    """Pack a boolean matrix into rows of uint64 words."""
    inc = np.asarray(inc, dtype=bool)
    n, m = inc.shape
    words = max(1, (m + 63) // 64)
    padded = np.zeros((n, words * 64), dtype=bool)
    padded[:, :m] = inc
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view(np.uint64).reshape(n, words)


@njit
def _a_irredundant_jit(bits, order):
    n = order.shape[0]
    words = bits.shape[1]
    kept = np.empty(n, dtype=np.int64)
    n_kept = 0
    for a in range(n):
        i = order[a]
        dominated = False
        for b in range(n_kept):
            j = kept[b]
            subset = True
            for w in range(words):
                if bits[i, w] & ~bits[j, w]:
                    subset = False
                    break
            if subset:
                dominated = True
                break
        if not dominated:
            kept[n_kept] = i
            n_kept += 1
    return kept[:n_kept]


def _sorted_order(inc):
    counts = np.asarray(inc, dtype=bool).sum(axis=1)
    return np.argsort(-counts, kind="stable").astype(np.int64)


def a_irredundant_order_numba(inc):
    if len(inc) == 0:
        return np.empty(0, dtype=np.int64)
    return _a_irredundant_jit(pack_rows(inc), _sorted_order(inc))


def a_irredundant_order_numpy(inc):
    inc = np.asarray(inc, dtype=bool)
    if len(inc) == 0:
        return np.empty(0, dtype=np.int64)
    order = _sorted_order(inc)
    kept = []
    kept_rows = np.empty((0, inc.shape[1]), dtype=bool)
    for i in order:
        row = inc[i]
        if len(kept) and not (row & ~kept_rows).any(axis=1).all():
            continue
        kept.append(i)
        kept_rows = np.vstack([kept_rows, row[None, :]])
    return np.asarray(kept, dtype=np.int64)


def a_irredundant_order(inc):
    """Indices of rays retained by A-irredundancy, in processing order.

    Rays are visited by descending number of active constraints (stable, so
    earlier indices win ties); a ray is dropped when its incidence set is a
    subset (not necessarily strict) of an already retained ray's set.
    """
    if use_numba():
        return a_irredundant_order_numba(inc)
    return a_irredundant_order_numpy(inc)
