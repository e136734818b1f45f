"""Compiled inner loops over patches.

Everything here works on raw arrays: image (H, W, K), weights (H, W, K),
patch top-left corners, and a parameter block (N, M+2) whose rows are M
angle slots followed by the vertex (x, y) in image coordinates.

Hard wedge membership uses the half-plane / cross-product comparison of
``geometry.hard_wedge_labels``; keep the two in sync.
"""
import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * np.pi
MASS_THRESHOLD = 1e-6
COND_THRESHOLD = 1e8
_NSTAT = 5  # per channel: w, w*I, w*I^2, w*Ihat, w*Ihat^2 (centered values)


# whole-patch cost below which a patch counts as constant
UNIFORM_TOL = 1e-13

@njit(cache=True, error_model='numpy')
def _wrap(a):
    w = a % TWO_PI
    if w >= TWO_PI:
        w = 0.0
    return w


@njit(cache=True, error_model='numpy')
def _sort_slots(raw, M, ang, perm):
    """Wrapped angles in ascending order; stable so ties keep slot order."""
    for k in range(M):
        ang[k] = _wrap(raw[k])
        perm[k] = k
    for a in range(1, M):
        v = ang[a]
        pv = perm[a]
        b = a - 1
        while b >= 0 and ang[b] > v:
            ang[b + 1] = ang[b]
            perm[b + 1] = perm[b]
            b -= 1
        ang[b + 1] = v
        perm[b + 1] = pv


@njit(cache=True, error_model='numpy')
def _half(x, y):
    if y > 0.0 or (y == 0.0 and x > 0.0):
        return 0
    return 1


@njit(cache=True, error_model='numpy')
def _geq(vx, vy, vh, ux, uy, uh):
    """Polar angle of v >= polar angle of u, both in [0, 2pi)."""
    if vh != uh:
        return vh > uh
    return ux * vy - uy * vx >= 0.0


@njit(cache=True, error_model='numpy')
def _label(dx, dy, ux, uy, uh, M):
    if dx == 0.0 and dy == 0.0:
        return 0
    vh = _half(dx, dy)
    j = -1
    for k in range(M):
        if _geq(dx, dy, vh, ux[k], uy[k], uh[k]):
            j = k
        else:
            break
    if j < 0:
        return M - 1
    return j


@njit(cache=True, error_model='numpy')
def _units(ang, n, ux, uy, uh):
    for k in range(n):
        ux[k] = math.cos(ang[k])
        uy[k] = math.sin(ang[k])
        uh[k] = _half(ux[k], uy[k])


# ---------------------------------------------------------------------------
# hard (piecewise-constant) likelihood and coordinate search
# ---------------------------------------------------------------------------

@njit(cache=True, error_model='numpy')
def _patch_stats(img, wts, ihat, r0, c0, R, lam_c, X, Y, S):
    """Fill pixel coordinates and centered sufficient statistics.

    Returns the cost of explaining the whole patch with one color, an
    upper bound on every partition's cost.
    """
    K = img.shape[2]
    mu = np.zeros(K)
    mass = np.zeros(K)
    for rr in range(R):
        for cc in range(R):
            for k in range(K):
                w = wts[r0 + rr, c0 + cc, k]
                mass[k] += w
                mu[k] += w * (img[r0 + rr, c0 + cc, k] + lam_c * ihat[r0 + rr, c0 + cc, k])
    for k in range(K):
        if mass[k] > 0.0:
            mu[k] /= (1.0 + lam_c) * mass[k]
    T = np.zeros((_NSTAT, K))
    p = 0
    for rr in range(R):
        for cc in range(R):
            X[p] = c0 + cc
            Y[p] = r0 + rr
            for k in range(K):
                w = wts[r0 + rr, c0 + cc, k]
                a = img[r0 + rr, c0 + cc, k] - mu[k]
                b = ihat[r0 + rr, c0 + cc, k] - mu[k]
                S[p, 0, k] = w
                S[p, 1, k] = w * a
                S[p, 2, k] = w * a * a
                S[p, 3, k] = w * b
                S[p, 4, k] = w * b * b
                for q in range(_NSTAT):
                    T[q, k] += S[p, q, k]
            p += 1
    return _wedge_cost(T, K, lam_c)


@njit(cache=True, error_model='numpy')
def _wedge_cost(T, K, lam_c):
    total = 0.0
    for k in range(K):
        s0 = T[0, k]
        c = 0.0  # centered data: empty wedges take the patch mean
        if s0 >= MASS_THRESHOLD:
            c = (T[1, k] + lam_c * T[3, k]) / ((1.0 + lam_c) * s0)
        v = T[2, k] - 2.0 * c * T[1, k] + c * c * s0
        v += lam_c * (T[4, k] - 2.0 * c * T[3, k] + c * c * s0)
        if v > 0.0:
            total += v
    return total


@njit(cache=True, error_model='numpy')
def _hard_cost(X, Y, S, P, ux, uy, uh, M, x0, y0, lam_c, T):
    K = S.shape[2]
    T[:] = 0.0
    for p in range(P):
        j = _label(X[p] - x0, Y[p] - y0, ux, uy, uh, M)
        for q in range(_NSTAT):
            for k in range(K):
                T[j, q, k] += S[p, q, k]
    total = 0.0
    for j in range(M):
        total += _wedge_cost(T[j], K, lam_c)
    return total


@njit(cache=True, error_model='numpy')
def _restricted_costs(X, Y, S, P, slots, M, j, x0, y0, cands, lam_c, out):
    """Cost of every candidate for angle slot j (others fixed).

    Pixels are binned once against the merged edge list
    (candidates + current angles); each candidate's wedges are then
    differences of prefix sums. Returns the cost of the current slots.
    """
    K = S.shape[2]
    n = cands.shape[0]
    E = n + M
    cur = np.empty(M)
    for m in range(M):
        cur[m] = _wrap(slots[m])
    # merge sorted candidates with sorted current angles
    cs = np.sort(cur)
    edges = np.empty(E)
    a = 0
    b = 0
    for e in range(E):
        if b >= M or (a < n and cands[a] <= cs[b]):
            edges[e] = cands[a]
            a += 1
        else:
            edges[e] = cs[b]
            b += 1
    ex = np.empty(E)
    ey = np.empty(E)
    eh = np.empty(E, dtype=np.int64)
    _units(edges, E, ex, ey, eh)
    pref = np.zeros((E + 1, _NSTAT, K))
    vstat = np.zeros((_NSTAT, K))
    for p in range(P):
        dx = X[p] - x0
        dy = Y[p] - y0
        if dx == 0.0 and dy == 0.0:
            for q in range(_NSTAT):
                for k in range(K):
                    vstat[q, k] += S[p, q, k]
            continue
        vh = _half(dx, dy)
        lo = 0
        hi = E
        while lo < hi:
            mid = (lo + hi) // 2
            if _geq(dx, dy, vh, ex[mid], ey[mid], eh[mid]):
                lo = mid + 1
            else:
                hi = mid
        b = lo - 1
        if b < 0:
            b = E - 1
        for q in range(_NSTAT):
            for k in range(K):
                pref[b + 1, q, k] += S[p, q, k]
    for e in range(E):
        pref[e + 1] += pref[e]
    idx_cur = np.empty(M, dtype=np.int64)
    for m in range(M):
        idx_cur[m] = np.searchsorted(edges, cur[m])
    idx = np.empty(M, dtype=np.int64)
    T = np.empty((_NSTAT, K))
    for c in range(n + 1):
        for m in range(M):
            idx[m] = idx_cur[m]
        if c < n:
            idx[j] = np.searchsorted(edges, cands[c])
        idx.sort()
        total = 0.0
        for m in range(M):
            if m < M - 1:
                for q in range(_NSTAT):
                    for k in range(K):
                        T[q, k] = pref[idx[m + 1], q, k] - pref[idx[m], q, k]
            else:
                for q in range(_NSTAT):
                    for k in range(K):
                        T[q, k] = pref[E, q, k] - (pref[idx[M - 1], q, k] - pref[idx[0], q, k])
            if m == 0:
                for q in range(_NSTAT):
                    for k in range(K):
                        T[q, k] += vstat[q, k]
            total += _wedge_cost(T, K, lam_c)
        if c < n:
            out[c] = total
        else:
            return total
    return 0.0


@njit(cache=True, error_model='numpy')
def _tol(cost):
    return 1e-12 * (1.0 + abs(cost))


@njit(cache=True, error_model='numpy')
def _run_center_argmin(costs):
    """Argmin; exact ties resolved to the middle of the circular run of
    equal-cost neighbours around the first minimizer (index 0 if all tie).

    Candidates inside one gap between pixel rays give the same partition,
    so the middle of the run is the best guess for the true angle.
    """
    n = costs.shape[0]
    first = 0
    for c in range(1, n):
        if costs[c] < costs[first]:
            first = c
    best = costs[first]
    lo = 0
    while lo < n - 1 and costs[(first - lo - 1) % n] == best:
        lo += 1
    if lo == n - 1:
        return 0
    hi = 0
    while costs[(first + hi + 1) % n] == best:
        hi += 1
    return (first - lo + (lo + hi) // 2) % n


@njit(cache=True, error_model='numpy')
def _angle_pass(X, Y, S, P, slots, M, x0, y0, cands, lam_c, costs):
    """One coordinate-descent sweep over the M angle slots."""
    changed = False
    for j in range(M):
        cur = _restricted_costs(X, Y, S, P, slots, M, j, x0, y0, cands, lam_c, costs)
        best = _run_center_argmin(costs)
        if costs[best] < cur - _tol(cur):
            slots[j] = cands[best]
            changed = True
    return changed


@njit(cache=True, error_model='numpy')
def _vertex_costs(X, Y, S, P, ux, uy, uh, M, x0, y0, axis, cands):
    """Hard cost at every candidate value of one vertex coordinate.

    As the vertex slides along one axis a pixel changes wedge only where
    it crosses a ray, or passes through the vertex. Labels are evaluated
    exactly on a few candidates around each such breakpoint and carried
    unchanged in between, so the totals match direct evaluation.
    ``cands`` must be ascending and uniformly spaced.
    """
    K = S.shape[2]
    n = cands.shape[0]
    base = np.zeros((M, _NSTAT, K))
    delta = np.zeros((n, M, _NSTAT, K))
    h = cands[1] - cands[0]
    win = np.empty(4 * (M + 1), dtype=np.int64)
    for p in range(P):
        if axis == 0:
            fixed = Y[p] - y0
            moving = X[p]
        else:
            fixed = X[p] - x0
            moving = Y[p]
        nw = 0
        for k in range(M + 1):
            if k < M:
                a = uy[k] if axis == 0 else ux[k]
                if fixed == 0.0 or a == 0.0 or (a > 0.0) != (fixed > 0.0):
                    continue
                bx = ux[k] if axis == 0 else uy[k]
                b = moving - fixed * bx / a
            else:
                if fixed != 0.0:
                    continue
                b = moving
            t = (b - cands[0]) / h
            if t < -3.0 or t > n + 2.0:
                continue
            i = int(math.floor(t))
            for q in range(i - 1, i + 3):
                if 0 < q < n:
                    win[nw] = q
                    nw += 1
        # insertion sort of the window indices
        for a1 in range(1, nw):
            v = win[a1]
            b1 = a1 - 1
            while b1 >= 0 and win[b1] > v:
                win[b1 + 1] = win[b1]
                b1 -= 1
            win[b1 + 1] = v
        if axis == 0:
            prev = _label(X[p] - cands[0], fixed, ux, uy, uh, M)
        else:
            prev = _label(fixed, Y[p] - cands[0], ux, uy, uh, M)
        for q in range(_NSTAT):
            for k in range(K):
                base[prev, q, k] += S[p, q, k]
        last = -1
        for a1 in range(nw):
            c = win[a1]
            if c == last:
                continue
            last = c
            if axis == 0:
                lab = _label(X[p] - cands[c], fixed, ux, uy, uh, M)
            else:
                lab = _label(fixed, Y[p] - cands[c], ux, uy, uh, M)
            if lab != prev:
                for q in range(_NSTAT):
                    for k in range(K):
                        delta[c, prev, q, k] -= S[p, q, k]
                        delta[c, lab, q, k] += S[p, q, k]
                prev = lab
    return base, delta


@njit(cache=True, error_model='numpy')
def _vertex_pass(X, Y, S, P, slots, M, x0, y0, axis, center, offs, lam_c, T):
    """1-D search over one vertex coordinate; returns the new value."""
    K = S.shape[2]
    ang = np.empty(M)
    perm = np.empty(M, dtype=np.int64)
    _sort_slots(slots, M, ang, perm)
    ux = np.empty(M)
    uy = np.empty(M)
    uh = np.empty(M, dtype=np.int64)
    _units(ang, M, ux, uy, uh)
    n = offs.shape[0]
    cands = np.empty(n)
    for c in range(n):
        cands[c] = center + offs[c]
    cur_v = x0 if axis == 0 else y0
    cur = _hard_cost(X, Y, S, P, ux, uy, uh, M, x0, y0, lam_c, T)
    base, delta = _vertex_costs(X, Y, S, P, ux, uy, uh, M, x0, y0, axis, cands)
    best = np.inf
    best_v = cur_v
    for c in range(n):
        if c > 0:
            for j in range(M):
                for q in range(_NSTAT):
                    for k in range(K):
                        base[j, q, k] += delta[c, j, q, k]
        cost = 0.0
        for j in range(M):
            cost += _wedge_cost(base[j], K, lam_c)
        v = cands[c]
        if cost < best or (cost == best and abs(v - cur_v) < abs(best_v - cur_v)):
            best = cost
            best_v = v
    if best < cur - _tol(cur):
        return best_v
    return cur_v


@njit(cache=True, error_model='numpy')
def vertex_costs_patch(img, wts, ihat, R, slots, M, axis, cands, lam_c):
    """Hard cost of one patch at each candidate of one vertex coordinate."""
    K = img.shape[2]
    P = R * R
    X = np.empty(P)
    Y = np.empty(P)
    S = np.empty((P, _NSTAT, K))
    _patch_stats(img, wts, ihat, 0, 0, R, lam_c, X, Y, S)
    ang = np.empty(M)
    perm = np.empty(M, dtype=np.int64)
    _sort_slots(slots, M, ang, perm)
    ux = np.empty(M)
    uy = np.empty(M)
    uh = np.empty(M, dtype=np.int64)
    _units(ang, M, ux, uy, uh)
    base, delta = _vertex_costs(X, Y, S, P, ux, uy, uh, M, slots[M], slots[M + 1], axis, cands)
    out = np.empty(cands.shape[0])
    for c in range(cands.shape[0]):
        if c > 0:
            base += delta[c]
        cost = 0.0
        for j in range(M):
            cost += _wedge_cost(base[j], K, lam_c)
        out[c] = cost
    return out


@njit(cache=True, error_model='numpy')
def _alg2_patch(X, Y, S, P, slots, M, cx, cy, n_rounds, from_zero, cands, offs, lam_c):
    """Coordinate descent on angles then x then y; returns rounds run."""
    K = S.shape[2]
    costs = np.empty(cands.shape[0])
    T = np.zeros((M, _NSTAT, K))
    if from_zero:
        for m in range(M):
            slots[m] = 0.0
        slots[M] = cx
        slots[M + 1] = cy
    for r in range(n_rounds):
        changed = _angle_pass(X, Y, S, P, slots, M, slots[M], slots[M + 1], cands, lam_c, costs)
        nx = _vertex_pass(X, Y, S, P, slots, M, slots[M], slots[M + 1], 0, cx, offs, lam_c, T)
        if nx != slots[M]:
            slots[M] = nx
            changed = True
        ny = _vertex_pass(X, Y, S, P, slots, M, slots[M], slots[M + 1], 1, cy, offs, lam_c, T)
        if ny != slots[M + 1]:
            slots[M + 1] = ny
            changed = True
        if not changed:
            return r + 1
    return n_rounds


@njit(cache=True, error_model='numpy')
def alg2_field(img, wts, ihat, rows, cols, R, params, M, n_rounds, from_zero, cands, offs, lam_c, rounds_out):
    """Run the angle/vertex coordinate descent on every patch in place."""
    K = img.shape[2]
    P = R * R
    X = np.empty(P)
    Y = np.empty(P)
    S = np.empty((P, _NSTAT, K))
    h = R // 2
    for i in range(rows.shape[0]):
        whole = _patch_stats(img, wts, ihat, rows[i], cols[i], R, lam_c, X, Y, S)
        cx = float(cols[i] + h)
        cy = float(rows[i] + h)
        if whole <= UNIFORM_TOL:
            # no partition can beat the current one by more than the tolerance
            if from_zero:
                for m in range(M):
                    params[i, m] = 0.0
                params[i, M] = cx
                params[i, M + 1] = cy
            rounds_out[i] = 0
            continue
        rounds_out[i] = _alg2_patch(X, Y, S, P, params[i], M, cx, cy, n_rounds, from_zero, cands, offs, lam_c)


@njit(cache=True, error_model='numpy')
def hard_cost_field(img, wts, ihat, rows, cols, R, params, M, lam_c, out):
    """Hard-indicator cost of every patch at its current parameters."""
    K = img.shape[2]
    P = R * R
    X = np.empty(P)
    Y = np.empty(P)
    S = np.empty((P, _NSTAT, K))
    T = np.zeros((M, _NSTAT, K))
    ang = np.empty(M)
    perm = np.empty(M, dtype=np.int64)
    ux = np.empty(M)
    uy = np.empty(M)
    uh = np.empty(M, dtype=np.int64)
    for i in range(rows.shape[0]):
        _patch_stats(img, wts, ihat, rows[i], cols[i], R, lam_c, X, Y, S)
        _sort_slots(params[i], M, ang, perm)
        _units(ang, M, ux, uy, uh)
        out[i] = _hard_cost(X, Y, S, P, ux, uy, uh, M, params[i, M], params[i, M + 1], lam_c, T)


@njit(cache=True, error_model='numpy')
def alg1_patch(img, wts, ihat, R, slots, M, cands, lam_c):
    """One pass over the angle slots of a single patch, vertex fixed."""
    K = img.shape[2]
    P = R * R
    X = np.empty(P)
    Y = np.empty(P)
    S = np.empty((P, _NSTAT, K))
    _patch_stats(img, wts, ihat, 0, 0, R, lam_c, X, Y, S)
    costs = np.empty(cands.shape[0])
    return _angle_pass(X, Y, S, P, slots, M, slots[M], slots[M + 1], cands, lam_c, costs)


@njit(cache=True, error_model='numpy')
def restricted_costs_patch(img, wts, ihat, r0, c0, R, slots, M, j, cands, lam_c):
    """Candidate costs for slot j of one patch, plus the current cost."""
    K = img.shape[2]
    P = R * R
    X = np.empty(P)
    Y = np.empty(P)
    S = np.empty((P, _NSTAT, K))
    _patch_stats(img, wts, ihat, r0, c0, R, lam_c, X, Y, S)
    out = np.empty(cands.shape[0])
    cur = _restricted_costs(X, Y, S, P, slots, M, j, slots[M], slots[M + 1], cands, lam_c, out)
    return out, cur


# ---------------------------------------------------------------------------
# relaxed objective, gradient and global-map accumulation
# ---------------------------------------------------------------------------

@njit(cache=True, error_model='numpy')
def _solve3(A, b, out):
    """Solve A x = b for symmetric 3x3 A; False if singular or ill-conditioned."""
    c00 = A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1]
    c01 = A[1, 2] * A[2, 0] - A[1, 0] * A[2, 2]
    c02 = A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0]
    det = A[0, 0] * c00 + A[0, 1] * c01 + A[0, 2] * c02
    if det == 0.0 or not math.isfinite(det):
        return False
    inv = np.empty((3, 3))
    inv[0, 0] = c00 / det
    inv[1, 0] = c01 / det
    inv[2, 0] = c02 / det
    inv[0, 1] = (A[0, 2] * A[2, 1] - A[0, 1] * A[2, 2]) / det
    inv[1, 1] = (A[0, 0] * A[2, 2] - A[0, 2] * A[2, 0]) / det
    inv[2, 1] = (A[0, 1] * A[2, 0] - A[0, 0] * A[2, 1]) / det
    inv[0, 2] = (A[0, 1] * A[1, 2] - A[0, 2] * A[1, 1]) / det
    inv[1, 2] = (A[0, 2] * A[1, 0] - A[0, 0] * A[1, 2]) / det
    inv[2, 2] = (A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]) / det
    na = 0.0
    ni = 0.0
    for c in range(3):
        sa = abs(A[0, c]) + abs(A[1, c]) + abs(A[2, c])
        si = abs(inv[0, c]) + abs(inv[1, c]) + abs(inv[2, c])
        if sa > na:
            na = sa
        if si > ni:
            ni = si
    cond = na * ni
    if not math.isfinite(cond) or cond > COND_THRESHOLD:
        return False
    for r in range(3):
        out[r] = inv[r, 0] * b[0] + inv[r, 1] * b[1] + inv[r, 2] * b[2]
    return True


@njit(cache=True, error_model='numpy', fastmath={'nsz', 'arcp', 'contract', 'afn', 'reassoc'})
def field_pass(img, wts, rows, cols, R, params, M, eta, delta, lam_b, lam_c, bhat, ihat,
               colors, solve_colors, linear, want_grad, grad, bacc, iacc, terms):
    """Evaluate every patch under the relaxed model.

    Per patch: optionally re-solve colors (with ``ihat`` frozen), record
    [likelihood, sum (B - bhat)^2, color consistency] in ``terms``,
    accumulate B and the rendered colors into ``bacc``/``iacc``, and write
    the gradient of likelihood + lam_b*boundary + lam_c*color with respect
    to the parameters (colors and global maps held fixed) into ``grad``.
    """
    K = img.shape[2]
    P = R * R
    Q = M - 1
    h2 = R // 2
    ang = np.empty(M)
    perm = np.empty(M, dtype=np.int64)
    sn = np.empty(M)
    cs = np.empty(M)
    usemax = np.zeros(M, dtype=np.bool_)
    Dk = np.empty((P, Q))
    BR = np.empty((P, Q), dtype=np.int64)
    Hk = np.empty((P, Q))
    U = np.empty((P, M))
    Bv = np.empty(P)
    KM = np.empty(P, dtype=np.int64)
    mom = np.empty((M, K, 6))
    rhs = np.empty((M, K, 3))
    pm = np.empty((K, 2))
    A = np.empty((3, 3))
    bb = np.empty(3)
    sol = np.empty(3)
    cl = np.empty((M, 3, K))
    e = np.empty(M)
    el = np.empty(M)
    ec = np.empty(M)
    gh = np.empty(Q)
    gl = np.empty(M)
    ga = np.empty(M)
    hloc = np.empty(Q)
    d2 = delta * delta
    inv_pi = 1.0 / math.pi
    for i in range(rows.shape[0]):
        r0 = rows[i]
        c0 = cols[i]
        cx = c0 + h2
        cy = r0 + h2
        _sort_slots(params[i], M, ang, perm)
        for l in range(M):
            sn[l] = math.sin(ang[l])
            cs[l] = math.cos(ang[l])
        for k in range(1, M):
            usemax[k] = (ang[k] - ang[0]) >= math.pi
        x0 = params[i, M]
        y0 = params[i, M + 1]
        if solve_colors:
            mom[:] = 0.0
            rhs[:] = 0.0
            pm[:] = 0.0
        # pass 1: geometry and color statistics
        p = 0
        for rr in range(R):
            Y = r0 + rr
            dy = Y - y0
            ly = Y - cy
            for cc in range(R):
                X = c0 + cc
                dx = X - x0
                a = -dx * sn[0] + dy * cs[0]
                mabs = np.inf
                km = 0
                for k in range(1, M):
                    b = dx * sn[k] - dy * cs[k]
                    if usemax[k]:
                        if a >= b:
                            d = a
                            br = 0
                        else:
                            d = b
                            br = 1
                    else:
                        if a <= b:
                            d = a
                            br = 0
                        else:
                            d = b
                            br = 1
                    Dk[p, k - 1] = d
                    BR[p, k - 1] = br
                    hv = 0.5 + math.atan(d / eta) * inv_pi
                    Hk[p, k - 1] = hv
                    hloc[k - 1] = hv
                    ad = abs(d)
                    if ad < mabs:
                        mabs = ad
                        km = k - 1
                KM[p] = km
                Bv[p] = d2 / (d2 + mabs * mabs)
                tail = 1.0
                for j in range(M - 1, 0, -1):
                    U[p, j] = tail * (1.0 - hloc[j - 1])
                    tail *= hloc[j - 1]
                U[p, 0] = tail
                if solve_colors:
                    lx = X - cx
                    for k in range(K):
                        w = wts[Y, X, k]
                        t = (img[Y, X, k] + lam_c * ihat[Y, X, k]) / (1.0 + lam_c)
                        pm[k, 0] += w
                        pm[k, 1] += w * t
                        for j in range(M):
                            uw = U[p, j] * w
                            mom[j, k, 5] += uw
                            rhs[j, k, 2] += uw * t
                            if linear:
                                mom[j, k, 0] += uw * lx * lx
                                mom[j, k, 1] += uw * lx * ly
                                mom[j, k, 2] += uw * lx
                                mom[j, k, 3] += uw * ly * ly
                                mom[j, k, 4] += uw * ly
                                rhs[j, k, 0] += uw * t * lx
                                rhs[j, k, 1] += uw * t * ly
                p += 1
        if solve_colors:
            for k in range(K):
                fb = pm[k, 1] / pm[k, 0] if pm[k, 0] > 0.0 else 0.0
                for j in range(M):
                    colors[i, j, 0, k] = 0.0
                    colors[i, j, 1, k] = 0.0
                    if mom[j, k, 5] < MASS_THRESHOLD:
                        colors[i, j, 2, k] = fb
                        continue
                    colors[i, j, 2, k] = rhs[j, k, 2] / mom[j, k, 5]
                    if linear:
                        A[0, 0] = mom[j, k, 0]
                        A[0, 1] = mom[j, k, 1]
                        A[0, 2] = mom[j, k, 2]
                        A[1, 0] = mom[j, k, 1]
                        A[1, 1] = mom[j, k, 3]
                        A[1, 2] = mom[j, k, 4]
                        A[2, 0] = mom[j, k, 2]
                        A[2, 1] = mom[j, k, 4]
                        A[2, 2] = mom[j, k, 5]
                        bb[0] = rhs[j, k, 0]
                        bb[1] = rhs[j, k, 1]
                        bb[2] = rhs[j, k, 2]
                        if _solve3(A, bb, sol):
                            colors[i, j, 0, k] = sol[0]
                            colors[i, j, 1, k] = sol[1]
                            colors[i, j, 2, k] = sol[2]
        for j in range(M):
            for q in range(3):
                for k in range(K):
                    cl[j, q, k] = colors[i, j, q, k]
        # pass 2: objective terms, gradient, map accumulation
        lik = 0.0
        col = 0.0
        bsq = 0.0
        gx = 0.0
        gy = 0.0
        for l in range(M):
            ga[l] = 0.0
        p = 0
        for rr in range(R):
            Y = r0 + rr
            ly = Y - cy
            dy = Y - y0
            for cc in range(R):
                X = c0 + cc
                lx = X - cx
                for j in range(M):
                    el[j] = 0.0
                    ec[j] = 0.0
                for k in range(K):
                    w = wts[Y, X, k]
                    iv = img[Y, X, k]
                    hv = ihat[Y, X, k]
                    rend = 0.0
                    for j in range(M):
                        c = cl[j, 0, k] * lx + cl[j, 1, k] * ly + cl[j, 2, k]
                        rend += U[p, j] * c
                        r1 = c - iv
                        r2 = c - hv
                        el[j] += w * r1 * r1
                        ec[j] += w * r2 * r2
                    iacc[Y, X, k] += rend
                for j in range(M):
                    lik += U[p, j] * el[j]
                    col += U[p, j] * ec[j]
                bd = Bv[p] - bhat[Y, X]
                bsq += bd * bd
                bacc[Y, X] += Bv[p]
                if want_grad:
                    for j in range(M):
                        e[j] = el[j] + lam_c * ec[j]
                    # d/dh_q of sum_j U_j e_j = S_{q+1} (L_q - e_{q+1}), where
                    # S_m = prod_{r >= m} h_r and L_{q+1} = L_q h_q + e_{q+1} (1 - h_q)
                    suf = 1.0
                    for q in range(Q - 1, -1, -1):
                        gh[q] = suf
                        suf *= Hk[p, q]
                    L = e[0]
                    for q in range(Q):
                        hq = Hk[p, q]
                        dd = Dk[p, q]
                        gh[q] *= (L - e[q + 1]) * (eta / (eta * eta + dd * dd)) * inv_pi
                        L = L * hq + e[q + 1] * (1.0 - hq)
                    if lam_b > 0.0:
                        km = KM[p]
                        dm = Dk[p, km]
                        den = d2 + dm * dm
                        # dB/dd = -2 d delta^2 / (delta^2 + d^2)^2
                        gh[km] += 2.0 * lam_b * bd * (-2.0 * dm * d2 / (den * den))
                    for l in range(M):
                        gl[l] = 0.0
                    for q in range(Q):
                        if BR[p, q] == 0:
                            gl[0] += gh[q]
                        else:
                            gl[q + 1] -= gh[q]
                    dx = X - x0
                    for l in range(M):
                        ga[l] += gl[l] * (-dx * cs[l] - dy * sn[l])
                        gx += gl[l] * sn[l]
                        gy -= gl[l] * cs[l]
                p += 1
        terms[i, 0] = lik
        terms[i, 1] = bsq
        terms[i, 2] = col
        if want_grad:
            for l in range(M):
                grad[i, perm[l]] = ga[l]
            grad[i, M] = gx
            grad[i, M + 1] = gy
