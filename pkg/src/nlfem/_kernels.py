"""Compiled inner loops: ball/triangle clipping and chunked assembly.

Everything here works on plain arrays so it can run without the GIL.  The
Python-facing wrappers live in :mod:`nlfem.geometry` and
:mod:`nlfem.assembly`.
"""
import math

import numpy as np
from numba import njit, types

# clip modes
NOCAPS = 0
EXACTCAPS = 1
APPROXCAPS = 2

# strategy codes (see geometry.BallStrategy)
S_EXACTCAPS = 0
S_NOCAPS = 1
S_APPROXCAPS = 2
S_BARYCENTER = 3
S_OVERLAP = 4
S_SHIFTED = 5
S_BARY_NOCAPS = 6
S_BARY_APPROXCAPS = 7
S_SHIFTED_NOCAPS = 8

# point kinds on the walked boundary
VERTEX = 0
ENTRY = 1
EXIT = 2

INSIDE_TOL = 1e-12
CHORD_TOL = 1e-8

CAP_COLS = 8  # gx, gy, area, exit x, exit y, entry x, entry y, theta

PSI_SIG = types.float64(types.float64, types.float64, types.float64, types.float64)
G_SIG = types.float64(types.float64, types.float64)


def max_cells(t):
    """Capacity of the triangle buffer for ``t`` triangles per cap."""
    return 8 + 4 * max(int(t), 1)


@njit(cache=True, nogil=True)
def inside(px, py, cx, cy, delta):
    r = delta * (1.0 + INSIDE_TOL)
    dx = px - cx
    dy = py - cy
    return dx * dx + dy * dy <= r * r


@njit(cache=True, nogil=True)
def segment_roots(ax, ay, bx, by, cx, cy, delta):
    """Roots ``l1 <= l2`` of ``|a + l (b - a) - c|^2 = delta^2``.

    Returns ``(count, l1, l2)``; ``count`` is 0 for a miss and for tangency
    within the relative tolerance.
    """
    dx = bx - ax
    dy = by - ay
    a = dx * dx + dy * dy
    if a == 0.0:
        return 0, 0.0, 0.0
    fx = ax - cx
    fy = ay - cy
    cr = fx * dy - fy * dx
    # a * (delta^2 - squared distance from c to the line)
    h = a * delta * delta - cr * cr
    if h <= 2.0 * INSIDE_TOL * a * delta * delta:
        return 0, 0.0, 0.0
    sq = math.sqrt(h)
    bb = fx * dx + fy * dy
    return 2, (-bb - sq) / a, (-bb + sq) / a


@njit(cache=True, nogil=True)
def point_in_triangle(tv, px, py):
    for i in range(3):
        j = (i + 1) % 3
        cr = (tv[j, 0] - tv[i, 0]) * (py - tv[i, 1]) - (tv[j, 1] - tv[i, 1]) * (px - tv[i, 0])
        if cr < 0.0:
            return False
    return True


@njit(cache=True, nogil=True)
def segment_area_factor(theta):
    """``2 theta - sin(2 theta)``, with a series near zero."""
    x = 2.0 * theta
    if x < 1e-2:
        x3 = x * x * x
        return x3 / 6.0 - x3 * x * x / 120.0 + x3 * x3 * x / 5040.0
    return x - math.sin(x)


@njit(cache=True, nogil=True)
def disk_overlaps_triangle(tv, cx, cy, delta):
    """True when the open disk meets the triangle in a set of positive area."""
    for i in range(3):
        if inside(tv[i, 0], tv[i, 1], cx, cy, delta):
            return True
    for i in range(3):
        j = (i + 1) % 3
        m, l1, l2 = segment_roots(tv[i, 0], tv[i, 1], tv[j, 0], tv[j, 1], cx, cy, delta)
        if m == 2 and l2 > 0.0 and l1 < 1.0:
            return True
    return point_in_triangle(tv, cx, cy)


@njit(cache=True, nogil=True)
def _push_point(wp, wk, n, x, y, kind):
    wp[n, 0] = x
    wp[n, 1] = y
    wk[n] = kind
    return n + 1


@njit(cache=True, nogil=True)
def boundary_walk(tv, cx, cy, delta, wp, wk):
    """Walk the triangle counterclockwise and collect the intersection polygon.

    Inside vertices get kind VERTEX, edge/circle crossings ENTRY or EXIT.
    Returns ``(n, n_inside)``; ``n == 0`` means no crossing at all.
    """
    mask = 0
    for i in range(3):
        if inside(tv[i, 0], tv[i, 1], cx, cy, delta):
            mask |= 1 << i
    n_in = (mask & 1) + ((mask >> 1) & 1) + ((mask >> 2) & 1)
    if n_in == 3:
        for i in range(3):
            wp[i, 0] = tv[i, 0]
            wp[i, 1] = tv[i, 1]
            wk[i] = VERTEX
        return 3, 3
    n = 0
    for i in range(3):
        j = (i + 1) % 3
        ax = tv[i, 0]
        ay = tv[i, 1]
        bx = tv[j, 0]
        by = tv[j, 1]
        ii = (mask >> i) & 1
        ij = (mask >> j) & 1
        if ii:
            n = _push_point(wp, wk, n, ax, ay, VERTEX)
            if not ij:
                m, l1, l2 = segment_roots(ax, ay, bx, by, cx, cy, delta)
                lam = l2 if m == 2 else 0.0
                lam = min(max(lam, 0.0), 1.0)
                n = _push_point(wp, wk, n, ax + lam * (bx - ax), ay + lam * (by - ay), EXIT)
        elif ij:
            m, l1, l2 = segment_roots(ax, ay, bx, by, cx, cy, delta)
            lam = l1 if m == 2 else 1.0
            lam = min(max(lam, 0.0), 1.0)
            n = _push_point(wp, wk, n, ax + lam * (bx - ax), ay + lam * (by - ay), ENTRY)
        else:
            m, l1, l2 = segment_roots(ax, ay, bx, by, cx, cy, delta)
            if m == 2 and l1 > 0.0 and l2 < 1.0:
                n = _push_point(wp, wk, n, ax + l1 * (bx - ax), ay + l1 * (by - ay), ENTRY)
                n = _push_point(wp, wk, n, ax + l2 * (bx - ax), ay + l2 * (by - ay), EXIT)
    return n, n_in


@njit(cache=True, nogil=True)
def _store_tri(tris, nt, x0, y0, x1, y1, x2, y2, min_area):
    area = 0.5 * ((x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0))
    if area <= min_area:
        return nt
    tris[nt, 0] = x0
    tris[nt, 1] = y0
    tris[nt, 2] = x1
    tris[nt, 3] = y1
    tris[nt, 4] = x2
    tris[nt, 5] = y2
    return nt + 1


@njit(cache=True, nogil=True)
def clip_triangle(tv, cx, cy, delta, mode, t, min_area, tris, caps, wp, wk):
    """Decompose ``triangle ∩ B_delta(c)`` into quadrature cells.

    Triangles go to ``tris`` as rows ``x0 y0 x1 y1 x2 y2`` (counterclockwise),
    caps to ``caps`` (EXACTCAPS only) as rows of :data:`CAP_COLS`.  For
    APPROXCAPS each cap is replaced by ``t`` inscribed triangles.  Returns
    ``(n_triangles, n_caps)``.
    """
    n, n_in = boundary_walk(tv, cx, cy, delta, wp, wk)
    if n_in == 3:
        nt = _store_tri(tris, 0, tv[0, 0], tv[0, 1], tv[1, 0], tv[1, 1], tv[2, 0], tv[2, 1], 0.0)
        return nt, 0
    if n == 0:
        if not point_in_triangle(tv, cx, cy):
            return 0, 0
        # the whole disk lies in the triangle: inscribed square plus four caps
        for m in range(4):
            ang = 0.5 * math.pi * m
            n = _push_point(wp, wk, m, cx + delta * math.cos(ang), cy + delta * math.sin(ang),
                            ENTRY | EXIT)
    nt = 0
    for i in range(1, n - 1):
        nt = _store_tri(tris, nt, wp[0, 0], wp[0, 1], wp[i, 0], wp[i, 1],
                        wp[i + 1, 0], wp[i + 1, 1], min_area)
    nc = 0
    if mode == NOCAPS:
        return nt, 0
    for m in range(n):
        if not (wk[m] & EXIT):
            continue
        q = (m + 1) % n
        ex = wp[m, 0]
        ey = wp[m, 1]
        fx = wp[q, 0]
        fy = wp[q, 1]
        dx = fx - ex
        dy = fy - ey
        c = math.sqrt(dx * dx + dy * dy)
        # exit and entry collapse when a vertex sits on the circle; the cap is
        # then empty, and the chord normal is too noisy to tell its side
        if c <= CHORD_TOL * delta:
            continue
        # the cap lies to the right of the chord exit -> entry
        nx = dy / c
        ny = -dx / c
        s = (cx - 0.5 * (ex + fx)) * nx + (cy - 0.5 * (ey + fy)) * ny
        theta = math.atan2(0.5 * c, -s)
        fac = segment_area_factor(theta)
        area = 0.5 * delta * delta * fac
        if area <= min_area:
            continue
        if mode == EXACTCAPS:
            st = math.sin(theta)
            g = 4.0 * delta * st * st * st / (3.0 * fac)
            caps[nc, 0] = cx + g * nx
            caps[nc, 1] = cy + g * ny
            caps[nc, 2] = area
            caps[nc, 3] = ex
            caps[nc, 4] = ey
            caps[nc, 5] = fx
            caps[nc, 6] = fy
            caps[nc, 7] = theta
            nc += 1
        else:
            alpha = math.atan2(ey - cy, ex - cx)
            step = 2.0 * theta / (t + 1)
            px = cx + delta * math.cos(alpha + step)
            py = cy + delta * math.sin(alpha + step)
            for j in range(1, t + 1):
                if j < t:
                    qx = cx + delta * math.cos(alpha + (j + 1) * step)
                    qy = cy + delta * math.sin(alpha + (j + 1) * step)
                else:
                    qx = fx
                    qy = fy
                nt = _store_tri(tris, nt, ex, ey, px, py, qx, qy, min_area)
                px = qx
                py = qy
    return nt, nc


@njit(cache=True, nogil=True)
def _fill_tv(tv, nodes, en, e):
    for a in range(3):
        tv[a, 0] = nodes[en[e, a], 0]
        tv[a, 1] = nodes[en[e, a], 1]


@njit(cache=True, nogil=True)
def _inner_point(x0, x1, y0, y1, w, wx, phx, e, is_omega, binv, psi, g, yy, cloc, s0, s1, s2):
    """One inner quadrature point; returns (ball-sum increment, g-sum increment)."""
    p = psi(x0, x1, y0, y1) * w
    if not is_omega:
        return 2.0 * p, 2.0 * p * g(y0, y1)
    l0 = binv[e, 0, 0] + binv[e, 0, 1] * y0 + binv[e, 0, 2] * y1
    l1 = binv[e, 1, 0] + binv[e, 1, 1] * y0 + binv[e, 1, 2] * y1
    l2 = binv[e, 2, 0] + binv[e, 2, 1] * y0 + binv[e, 2, 2] * y1
    s = wx * p
    yy[e, 0, 0] += s * l0 * l0
    yy[e, 0, 1] += s * l0 * l1
    yy[e, 0, 2] += s * l0 * l2
    yy[e, 1, 1] += s * l1 * l1
    yy[e, 1, 2] += s * l1 * l2
    yy[e, 2, 2] += s * l2 * l2
    for a in range(3):
        sa = s * phx[a]
        cloc[a, s0] += sa * l0
        cloc[a, s1] += sa * l1
        cloc[a, s2] += sa * l2
    return p, 0.0


@njit(cache=True, nogil=True)
def _inner_cells(x0, x1, wx, phx, e, is_omega, tris, nt, caps, nc, binv, psi, g,
                 yy, cloc, s0, s1, s2):
    """Gauss3 (edge midpoints) on triangle cells, centroid rule on caps."""
    S = 0.0
    R = 0.0
    for c in range(nt):
        area = 0.5 * ((tris[c, 2] - tris[c, 0]) * (tris[c, 5] - tris[c, 1])
                      - (tris[c, 3] - tris[c, 1]) * (tris[c, 4] - tris[c, 0]))
        w = area / 3.0
        for m in range(3):
            j = (m + 1) % 3
            y0 = 0.5 * (tris[c, 2 * m] + tris[c, 2 * j])
            y1 = 0.5 * (tris[c, 2 * m + 1] + tris[c, 2 * j + 1])
            dS, dR = _inner_point(x0, x1, y0, y1, w, wx, phx, e, is_omega, binv, psi, g,
                                  yy, cloc, s0, s1, s2)
            S += dS
            R += dR
    for c in range(nc):
        dS, dR = _inner_point(x0, x1, caps[c, 0], caps[c, 1], caps[c, 2], wx, phx, e,
                              is_omega, binv, psi, g, yy, cloc, s0, s1, s2)
        S += dS
        R += dR
    return S, R


@njit(cache=True, nogil=True)
def _add_outer(xl, rl, wx, phx, S, R):
    for a in range(3):
        ca = wx * phx[a]
        rl[a] += ca * R
        for b in range(a, 3):
            xl[a, b] += ca * phx[b] * S


@njit(cache=True, nogil=True)
def count_local_nodes(en, region, cand_ptr, cand_idx, p0, p1, n_nodes):
    """Per outer element, the number of distinct nodes of its Omega candidates."""
    stamp = np.full(n_nodes, -1, np.int64)
    out = np.zeros(p1 - p0, np.int64)
    for p in range(p0, p1):
        nloc = 0
        for c in range(cand_ptr[p], cand_ptr[p + 1]):
            e = cand_idx[c]
            if region[e] != 0:
                continue
            for b in range(3):
                nd = en[e, b]
                if stamp[nd] != p:
                    stamp[nd] = p
                    nloc += 1
        out[p - p0] = nloc
    return out


_f2 = types.float64[:, ::1]
_f1 = types.float64[::1]
_i2 = types.int64[:, ::1]
_i1 = types.int64[::1]
_f3 = types.float64[:, :, ::1]

CHUNK_SIG = types.Tuple((_f3, _f2, _f3, _i1, _i1, _f1))(
    _f2, _i2, _i1, _f2, _f3, _i1, _i1, _i1, _i1, types.int64, types.int64,
    types.int64, types.int64, types.float64, types.float64, types.float64,
    _f2, _f1, _f2, _f1, types.FunctionType(PSI_SIG), types.FunctionType(G_SIG),
)


@njit(CHUNK_SIG, cache=True, nogil=True)
def assemble_chunk(nodes, en, region, bary, binv, omega, cand_ptr, cand_idx, nloc_count,
                   p0, p1, strategy, t, delta, h_max, min_area, g4, g4w, vm7, vm7w, psi, g):
    """Local contributions of the outer elements ``omega[p0:p1]``.

    Returns ``(xx, rr, yy, c_row, c_col, c_val)``:
    ``xx[p]`` is the upper triangle of the x-x block of outer element p,
    ``rr[p]`` its volume-constraint load, ``yy[e]`` the upper triangle of
    the y-y block of inner element e, and the triplets hold the x-y cross
    block.
    """
    m = p1 - p0
    K = en.shape[0]
    n_nodes = nodes.shape[0]
    xx = np.zeros((m, 3, 3))
    rr = np.zeros((m, 3))
    yy = np.zeros((K, 3, 3))
    total = 0
    maxloc = 1
    for i in range(m):
        total += 3 * nloc_count[i]
        maxloc = max(maxloc, nloc_count[i])
    c_row = np.empty(total, np.int64)
    c_col = np.empty(total, np.int64)
    c_val = np.empty(total)
    pos = 0

    stamp = np.full(n_nodes, -1, np.int64)
    slot = np.zeros(n_nodes, np.int64)
    locnodes = np.zeros(maxloc, np.int64)
    cloc = np.zeros((3, maxloc))
    tv = np.empty((3, 2))
    tvk = np.empty((3, 2))
    ncell = 8 + 4 * max(t, 1)
    tris = np.empty((ncell, 6))
    trisk = np.empty((ncell, 6))
    caps = np.empty((4, CAP_COLS))
    capsk = np.empty((4, CAP_COLS))
    wp = np.empty((8, 2))
    wk = np.empty(8, np.int64)
    phx = np.empty(3)
    xl = np.zeros((3, 3))
    rl = np.zeros(3)
    Sq = np.zeros(4)
    Rq = np.zeros(4)
    xq = np.empty((4, 2))

    if strategy == S_EXACTCAPS or strategy == S_SHIFTED:
        mode = EXACTCAPS
    elif strategy == S_APPROXCAPS or strategy == S_BARY_APPROXCAPS:
        mode = APPROXCAPS
    else:
        mode = NOCAPS
    case1_cut = delta - h_max

    for p in range(p0, p1):
        k = omega[p]
        nloc = 0
        for c in range(cand_ptr[p], cand_ptr[p + 1]):
            e = cand_idx[c]
            if region[e] != 0:
                continue
            for b in range(3):
                nd = en[e, b]
                if stamp[nd] != p:
                    stamp[nd] = p
                    slot[nd] = nloc
                    locnodes[nloc] = nd
                    nloc += 1
        for a in range(3):
            for l in range(nloc):
                cloc[a, l] = 0.0
            rl[a] = 0.0
            for b in range(3):
                xl[a, b] = 0.0
        _fill_tv(tvk, nodes, en, k)
        area_k = 0.5 * ((tvk[1, 0] - tvk[0, 0]) * (tvk[2, 1] - tvk[0, 1])
                        - (tvk[1, 1] - tvk[0, 1]) * (tvk[2, 0] - tvk[0, 0]))
        bkx = bary[k, 0]
        bky = bary[k, 1]

        if strategy <= S_OVERLAP:
            for which in range(2):
                if which == 0:
                    rb = g4
                    rw = g4w
                else:
                    rb = vm7
                    rw = vm7w
                for q in range(rw.shape[0]):
                    x0 = 0.0
                    x1 = 0.0
                    for a in range(3):
                        phx[a] = rb[q, a]
                        x0 += rb[q, a] * tvk[a, 0]
                        x1 += rb[q, a] * tvk[a, 1]
                    wx = rw[q] * 2.0 * area_k
                    S = 0.0
                    R = 0.0
                    for c in range(cand_ptr[p], cand_ptr[p + 1]):
                        e = cand_idx[c]
                        d = math.hypot(bkx - bary[e, 0], bky - bary[e, 1])
                        if (d < case1_cut) != (which == 0):
                            continue
                        _fill_tv(tv, nodes, en, e)
                        if strategy == S_BARYCENTER:
                            if not inside(bary[e, 0], bary[e, 1], x0, x1, delta):
                                continue
                            nt = _store_tri(tris, 0, tv[0, 0], tv[0, 1], tv[1, 0], tv[1, 1],
                                            tv[2, 0], tv[2, 1], 0.0)
                            nc = 0
                        elif strategy == S_OVERLAP:
                            if not disk_overlaps_triangle(tv, x0, x1, delta):
                                continue
                            nt = _store_tri(tris, 0, tv[0, 0], tv[0, 1], tv[1, 0], tv[1, 1],
                                            tv[2, 0], tv[2, 1], 0.0)
                            nc = 0
                        else:
                            nt, nc = clip_triangle(tv, x0, x1, delta, mode, t, min_area,
                                                   tris, caps, wp, wk)
                        if nt + nc == 0:
                            continue
                        is_omega = region[e] == 0
                        s0 = slot[en[e, 0]]
                        s1 = slot[en[e, 1]]
                        s2 = slot[en[e, 2]]
                        dS, dR = _inner_cells(x0, x1, wx, phx, e, is_omega, tris, nt, caps, nc,
                                              binv, psi, g, yy, cloc, s0, s1, s2)
                        S += dS
                        R += dR
                    _add_outer(xl, rl, wx, phx, S, R)

        elif strategy == S_SHIFTED or strategy == S_SHIFTED_NOCAPS:
            for q in range(4):
                Sq[q] = 0.0
                Rq[q] = 0.0
                xq[q, 0] = 0.0
                xq[q, 1] = 0.0
                for a in range(3):
                    xq[q, 0] += g4[q, a] * tvk[a, 0]
                    xq[q, 1] += g4[q, a] * tvk[a, 1]
            for c in range(cand_ptr[p], cand_ptr[p + 1]):
                e = cand_idx[c]
                _fill_tv(tv, nodes, en, e)
                nt, nc = clip_triangle(tv, bkx, bky, delta, mode, t, min_area, tris, caps, wp, wk)
                if nt + nc == 0:
                    continue
                is_omega = region[e] == 0
                s0 = slot[en[e, 0]]
                s1 = slot[en[e, 1]]
                s2 = slot[en[e, 2]]
                for q in range(4):
                    for a in range(3):
                        phx[a] = g4[q, a]
                    wx = g4w[q] * 2.0 * area_k
                    dS, dR = _inner_cells(xq[q, 0], xq[q, 1], wx, phx, e, is_omega, tris, nt,
                                          caps, nc, binv, psi, g, yy, cloc, s0, s1, s2)
                    Sq[q] += dS
                    Rq[q] += dR
            for q in range(4):
                for a in range(3):
                    phx[a] = g4[q, a]
                _add_outer(xl, rl, g4w[q] * 2.0 * area_k, phx, Sq[q], Rq[q])

        else:
            # outer support E_k ∩ B_delta(barycenter of E_e), inner element taken whole
            for c in range(cand_ptr[p], cand_ptr[p + 1]):
                e = cand_idx[c]
                ntk, _unused = clip_triangle(tvk, bary[e, 0], bary[e, 1], delta, mode, t,
                                             min_area, trisk, capsk, wp, wk)
                if ntk == 0:
                    continue
                _fill_tv(tv, nodes, en, e)
                nt = _store_tri(tris, 0, tv[0, 0], tv[0, 1], tv[1, 0], tv[1, 1],
                                tv[2, 0], tv[2, 1], 0.0)
                is_omega = region[e] == 0
                s0 = slot[en[e, 0]]
                s1 = slot[en[e, 1]]
                s2 = slot[en[e, 2]]
                for st in range(ntk):
                    area_s = 0.5 * ((trisk[st, 2] - trisk[st, 0]) * (trisk[st, 5] - trisk[st, 1])
                                    - (trisk[st, 3] - trisk[st, 1]) * (trisk[st, 4] - trisk[st, 0]))
                    for q in range(4):
                        x0 = (g4[q, 0] * trisk[st, 0] + g4[q, 1] * trisk[st, 2]
                              + g4[q, 2] * trisk[st, 4])
                        x1 = (g4[q, 0] * trisk[st, 1] + g4[q, 1] * trisk[st, 3]
                              + g4[q, 2] * trisk[st, 5])
                        for a in range(3):
                            phx[a] = binv[k, a, 0] + binv[k, a, 1] * x0 + binv[k, a, 2] * x1
                        wx = g4w[q] * 2.0 * area_s
                        dS, dR = _inner_cells(x0, x1, wx, phx, e, is_omega, tris, nt, caps, 0,
                                              binv, psi, g, yy, cloc, s0, s1, s2)
                        _add_outer(xl, rl, wx, phx, dS, dR)

        i = p - p0
        for a in range(3):
            rr[i, a] = rl[a]
            for b in range(a, 3):
                xx[i, a, b] = xl[a, b]
            row = en[k, a]
            for l in range(nloc):
                v = cloc[a, l]
                if v != 0.0:
                    c_row[pos] = row
                    c_col[pos] = locnodes[l]
                    c_val[pos] = v
                    pos += 1
    return xx, rr, yy, c_row[:pos], c_col[:pos], c_val[:pos]


@njit(cache=True, nogil=True)
def _cap_bbox(cx, cy, r, ex, ey, fx, fy, theta):
    xmin = min(ex, fx)
    xmax = max(ex, fx)
    ymin = min(ey, fy)
    ymax = max(ey, fy)
    a0 = math.atan2(ey - cy, ex - cx)
    span = 2.0 * theta
    for m in range(-4, 7):
        ang = 0.5 * math.pi * m
        if a0 <= ang <= a0 + span:
            px = cx + r * math.cos(ang)
            py = cy + r * math.sin(ang)
            xmin = min(xmin, px)
            xmax = max(xmax, px)
            ymin = min(ymin, py)
            ymax = max(ymax, py)
    return xmin, xmax, ymin, ymax


@njit(cache=True, nogil=True)
def sample_ball_difference(cx, cy, delta, tris, caps, cap_cx, cap_cy, half, n_side, seed):
    """Stratified estimate of ``|B_delta(c) Δ (union of cells)|``.

    The box ``[c - half, c + half]^2`` is split into ``n_side^2`` strata with
    one uniform point each.  Caps are given as rows of :data:`CAP_COLS` and
    share the circle centre ``(cap_cx, cap_cy)``.  Returns
    ``(estimate, standard error)``; the error is the binomial bound, which
    overstates the stratified one.
    """
    np.random.seed(seed)
    n_tot = n_side * n_side
    offs = np.random.random((n_tot, 2))
    hit = np.zeros(n_tot, np.bool_)
    h = 2.0 * half / n_side
    x0 = cx - half
    y0 = cy - half
    for c in range(tris.shape[0]):
        ax = tris[c, 0]
        ay = tris[c, 1]
        bx = tris[c, 2]
        by = tris[c, 3]
        qx = tris[c, 4]
        qy = tris[c, 5]
        i0 = max(int(math.floor((min(ax, bx, qx) - x0) / h)), 0)
        i1 = min(int(math.floor((max(ax, bx, qx) - x0) / h)) + 1, n_side)
        j0 = max(int(math.floor((min(ay, by, qy) - y0) / h)), 0)
        j1 = min(int(math.floor((max(ay, by, qy) - y0) / h)) + 1, n_side)
        for i in range(i0, i1):
            for j in range(j0, j1):
                idx = i * n_side + j
                px = x0 + (i + offs[idx, 0]) * h
                py = y0 + (j + offs[idx, 1]) * h
                if ((bx - ax) * (py - ay) - (by - ay) * (px - ax) >= 0.0
                        and (qx - bx) * (py - by) - (qy - by) * (px - bx) >= 0.0
                        and (ax - qx) * (py - qy) - (ay - qy) * (px - qx) >= 0.0):
                    hit[idx] = True
    for c in range(caps.shape[0]):
        ex = caps[c, 3]
        ey = caps[c, 4]
        fx = caps[c, 5]
        fy = caps[c, 6]
        xmin, xmax, ymin, ymax = _cap_bbox(cap_cx, cap_cy, delta, ex, ey, fx, fy, caps[c, 7])
        i0 = max(int(math.floor((xmin - x0) / h)), 0)
        i1 = min(int(math.floor((xmax - x0) / h)) + 1, n_side)
        j0 = max(int(math.floor((ymin - y0) / h)), 0)
        j1 = min(int(math.floor((ymax - y0) / h)) + 1, n_side)
        for i in range(i0, i1):
            for j in range(j0, j1):
                idx = i * n_side + j
                px = x0 + (i + offs[idx, 0]) * h
                py = y0 + (j + offs[idx, 1]) * h
                dx = px - cap_cx
                dy = py - cap_cy
                # right of the chord exit -> entry and inside the circle
                if (dx * dx + dy * dy <= delta * delta
                        and (fx - ex) * (py - ey) - (fy - ey) * (px - ex) <= 0.0):
                    hit[idx] = True
    count = 0
    r2 = delta * delta
    for i in range(n_side):
        for j in range(n_side):
            idx = i * n_side + j
            px = x0 + (i + offs[idx, 0]) * h - cx
            py = y0 + (j + offs[idx, 1]) * h - cy
            if (px * px + py * py <= r2) != hit[idx]:
                count += 1
    box = 4.0 * half * half
    p = count / n_tot
    return box * p, box * math.sqrt(max(p * (1.0 - p), 1.0 / n_tot) / n_tot)
