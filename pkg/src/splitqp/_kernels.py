"""Compiled inner loops: depth-first branch-and-bound and sweep updates."""

import numpy as np
from numba import njit

CONS_TOL = 1e-9


@njit(cache=True, nogil=True)
def _assign(u, v, indptr, indices, data, c, negsum, A, lhs, rmin, rmax, x, decided, partial):
    for p in range(indptr[u], indptr[u + 1]):
        w = indices[p]
        q = data[p]
        if q < 0.0:
            negsum[w] -= q
        if v == 1:
            c[w] += q
    if v == 1:
        partial += c[u]
    for r in range(A.shape[0]):
        a = A[r, u]
        if a < 0.0:
            rmin[r] -= a
        else:
            rmax[r] -= a
        lhs[r] += a * v
    x[u] = v
    decided[u] = True
    return partial


@njit(cache=True, nogil=True)
def _undo(u, v, indptr, indices, data, c, negsum, A, lhs, rmin, rmax, x, decided, partial):
    if v == 1:
        partial -= c[u]
    for p in range(indptr[u], indptr[u + 1]):
        w = indices[p]
        q = data[p]
        if q < 0.0:
            negsum[w] += q
        if v == 1:
            c[w] -= q
    for r in range(A.shape[0]):
        a = A[r, u]
        if a < 0.0:
            rmin[r] += a
        else:
            rmax[r] += a
        lhs[r] -= a * v
    x[u] = 0
    decided[u] = False
    return partial


@njit(cache=True, nogil=True)
def _feasible(b, is_eq, lhs, rmin, rmax):
    for r in range(b.shape[0]):
        if lhs[r] + rmin[r] > b[r] + CONS_TOL:
            return False
        if is_eq[r] and lhs[r] + rmax[r] < b[r] - CONS_TOL:
            return False
    return True


@njit(cache=True, nogil=True)
def _bound(n, c, negsum, decided, partial, card_row, b, is_eq, lhs, tmp):
    cnt = 0
    total = partial
    for u in range(n):
        if not decided[u]:
            t = c[u] + negsum[u]
            if card_row >= 0:
                tmp[cnt] = t
                cnt += 1
            elif t < 0.0:
                total += t
    if card_row >= 0:
        need = int(round(b[card_row] - lhs[card_row]))
        vals = np.sort(tmp[:cnt])
        for i in range(min(need, cnt)):
            if is_eq[card_row] or vals[i] < 0.0:
                total += vals[i]
    return total


@njit(cache=True, nogil=True)
def bb_search(indptr, indices, data, order, A, b, is_eq, card_row,
              pos_arr, stage, vals, c, negsum, lhs, rmin, rmax, x, decided,
              best_x, fstate, counters, max_nodes):
    """Resumable DFS. ``fstate = [partial, best_cost]``, ``counters = [nodes]``.

    Returns 0 when the tree is exhausted, 1 when ``max_nodes`` new nodes
    were expanded in this call.
    """
    n = order.shape[0]
    tmp = np.empty(n)
    pos = pos_arr[0]
    partial = fstate[0]
    best = fstate[1]
    start_nodes = counters[0]
    while True:
        if counters[0] - start_nodes >= max_nodes:
            pos_arr[0] = pos
            fstate[0] = partial
            fstate[1] = best
            return 1
        if pos == n:
            best = partial
            for i in range(n):
                best_x[i] = x[i]
            pos -= 1
            partial = _undo(order[pos], vals[pos], indptr, indices, data, c, negsum, A, lhs, rmin, rmax,
                            x, decided, partial)
            continue
        st = stage[pos]
        if st == 2:
            stage[pos] = 0
            if pos == 0:
                pos_arr[0] = 0
                fstate[0] = partial
                fstate[1] = best
                return 0
            pos -= 1
            partial = _undo(order[pos], vals[pos], indptr, indices, data, c, negsum, A, lhs, rmin, rmax,
                            x, decided, partial)
            continue
        u = order[pos]
        if st == 0:
            v = 1 if c[u] < 0.0 else 0
        else:
            v = 1 - vals[pos]
        stage[pos] = st + 1
        vals[pos] = v
        partial = _assign(u, v, indptr, indices, data, c, negsum, A, lhs, rmin, rmax, x, decided, partial)
        counters[0] += 1
        eps = 1e-10 * max(1.0, abs(best)) if best < np.inf else 0.0
        prune = not _feasible(b, is_eq, lhs, rmin, rmax)
        if not prune and best < np.inf:
            bnd = _bound(n, c, negsum, decided, partial, card_row, b, is_eq, lhs, tmp)
            prune = bnd >= best - eps
        if prune:
            partial = _undo(u, v, indptr, indices, data, c, negsum, A, lhs, rmin, rmax, x, decided, partial)
            continue
        pos += 1


@njit(cache=True, nogil=True)
def single_flip_sweep(linear, indptr, indices, data, x):
    """One in-order pass of improving single flips; mutates ``x``."""
    n = x.shape[0]
    f = linear.copy()
    for i in range(n):
        if x[i] == 1:
            for p in range(indptr[i], indptr[i + 1]):
                f[indices[p]] += data[p]
    for i in range(n):
        delta = f[i] if x[i] == 0 else -f[i]
        if delta < -1e-12:
            s = 1.0 if x[i] == 0 else -1.0
            x[i] = 1 - x[i]
            for p in range(indptr[i], indptr[i + 1]):
                f[indices[p]] += s * data[p]
    return x


@njit(cache=True, nogil=True)
def double_flip_all_pairs(linear, indptr, indices, data, x, part):
    """Improving flips of opposite-valued pairs in different parts,
    scanned in lexicographic ``(i, j)`` order; mutates ``x``."""
    n = x.shape[0]
    f = linear.copy()
    for i in range(n):
        if x[i] == 1:
            for p in range(indptr[i], indptr[i + 1]):
                f[indices[p]] += data[p]
    row = np.zeros(n)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            row[indices[p]] = data[p]
        for j in range(i + 1, n):
            if part[i] == part[j] or x[i] == x[j]:
                continue
            di = f[i] if x[i] == 0 else -f[i]
            dj = f[j] if x[j] == 0 else -f[j]
            if di + dj - row[j] < -1e-12:
                for k in (i, j):
                    s = 1.0 if x[k] == 0 else -1.0
                    x[k] = 1 - x[k]
                    for p in range(indptr[k], indptr[k + 1]):
                        f[indices[p]] += s * data[p]
        for p in range(indptr[i], indptr[i + 1]):
            row[indices[p]] = 0.0
    return x


@njit(cache=True, nogil=True)
def double_flip_pairs(linear, indptr, indices, data, x, pi, pj):
    """Same move as :func:`double_flip_all_pairs` over an explicit pair list."""
    n = x.shape[0]
    f = linear.copy()
    for i in range(n):
        if x[i] == 1:
            for p in range(indptr[i], indptr[i + 1]):
                f[indices[p]] += data[p]
    for t in range(pi.shape[0]):
        i = pi[t]
        j = pj[t]
        if x[i] == x[j]:
            continue
        q = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == j:
                q = data[p]
                break
        di = f[i] if x[i] == 0 else -f[i]
        dj = f[j] if x[j] == 0 else -f[j]
        if di + dj - q < -1e-12:
            for k in (i, j):
                s = 1.0 if x[k] == 0 else -1.0
                x[k] = 1 - x[k]
                for p in range(indptr[k], indptr[k + 1]):
                    f[indices[p]] += s * data[p]
    return x
