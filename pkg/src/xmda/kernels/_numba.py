"""Numba-compiled hot kernels.

Loop orders are chosen for single-core throughput: dense conv gathers a
9*Cin patch row and hits BLAS via ``np.dot``; sparse conv does the same
over the 27-voxel neighborhood. All scatter/reduce loops are serial so
results are bit-reproducible run to run. The raycaster runs without
fastmath so it matches the numpy fallback exactly.
"""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def conv3x3_fwd(x, w, bias):
    b, h, wd, cin = x.shape
    cout = w.shape[3]
    w2 = np.ascontiguousarray(w.reshape(9 * cin, cout))
    xp = np.zeros((h + 2, wd + 2, cin), dtype=x.dtype)
    y = np.empty((b, h, wd, cout), dtype=x.dtype)
    row = np.empty(9 * cin, dtype=x.dtype)
    for n in range(b):
        xp[1:h + 1, 1:wd + 1] = x[n]
        for i in range(h):
            for j in range(wd):
                k = 0
                for ky in range(3):
                    for kx in range(3):
                        for ci in range(cin):
                            row[k] = xp[i + ky, j + kx, ci]
                            k += 1
                o = np.dot(row, w2)
                for co in range(cout):
                    y[n, i, j, co] = o[co] + bias[co]
    return y


@njit(cache=True, fastmath=True)
def conv3x3_bwd_params(x, gy):
    b, h, wd, cin = x.shape
    cout = gy.shape[3]
    gw = np.zeros((9 * cin, cout), dtype=x.dtype)
    gb = np.zeros(cout, dtype=x.dtype)
    xp = np.zeros((h + 2, wd + 2, cin), dtype=x.dtype)
    for n in range(b):
        xp[1:h + 1, 1:wd + 1] = x[n]
        for i in range(h):
            for j in range(wd):
                k = 0
                for ky in range(3):
                    for kx in range(3):
                        for ci in range(cin):
                            f = xp[i + ky, j + kx, ci]
                            if f != 0.0:
                                for co in range(cout):
                                    gw[k, co] += f * gy[n, i, j, co]
                            k += 1
                for co in range(cout):
                    gb[co] += gy[n, i, j, co]
    return gw.reshape(3, 3, cin, cout), gb


@njit(cache=True)
def maxpool2_fwd(x):
    b, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    y = np.empty((b, ho, wo, c), dtype=x.dtype)
    idx = np.empty((b, ho, wo, c), dtype=np.int8)
    for n in range(b):
        for i in range(ho):
            for j in range(wo):
                for ch in range(c):
                    best = x[n, 2 * i, 2 * j, ch]
                    q = 0
                    for dy in range(2):
                        for dx in range(2):
                            v = x[n, 2 * i + dy, 2 * j + dx, ch]
                            if v > best:
                                best = v
                                q = 2 * dy + dx
                    y[n, i, j, ch] = best
                    idx[n, i, j, ch] = q
    return y, idx


@njit(cache=True)
def maxpool2_bwd(gy, idx, b, h, w, c):
    gx = np.zeros((b, h, w, c), dtype=gy.dtype)
    ho, wo = h // 2, w // 2
    for n in range(b):
        for i in range(ho):
            for j in range(wo):
                for ch in range(c):
                    q = idx[n, i, j, ch]
                    gx[n, 2 * i + q // 2, 2 * j + q % 2, ch] += gy[n, i, j, ch]
    return gx


@njit(cache=True)
def scatter_rows_add(g, idx, nrows):
    out = np.zeros((nrows, g.shape[1]), dtype=g.dtype)
    for i in range(g.shape[0]):
        r = idx[i]
        for ch in range(g.shape[1]):
            out[r, ch] += g[i, ch]
    return out


@njit(cache=True)
def segment_mean_fwd(x, seg, nseg):
    counts = np.zeros(nseg, dtype=x.dtype)
    y = np.zeros((nseg, x.shape[1]), dtype=x.dtype)
    for i in range(x.shape[0]):
        s = seg[i]
        counts[s] += 1.0
        for ch in range(x.shape[1]):
            y[s, ch] += x[i, ch]
    for s in range(nseg):
        if counts[s] > 0.0:
            for ch in range(x.shape[1]):
                y[s, ch] /= counts[s]
    return y, counts


@njit(cache=True)
def scatter_pixels_add(b, h, w, c, bi, vi, ui, g):
    out = np.zeros((b, h, w, c), dtype=g.dtype)
    for i in range(g.shape[0]):
        for ch in range(c):
            out[bi[i], vi[i], ui[i], ch] += g[i, ch]
    return out


@njit(cache=True, fastmath=True)
def sparse_conv_fwd(feat, nbr, w, bias):
    v, cin = feat.shape
    cout = w.shape[2]
    w2 = np.ascontiguousarray(w.reshape(27 * cin, cout))
    y = np.empty((v, cout), dtype=feat.dtype)
    row = np.empty(27 * cin, dtype=feat.dtype)
    for i in range(v):
        for k in range(27):
            u = nbr[i, k]
            base = k * cin
            if u < 0:
                for ci in range(cin):
                    row[base + ci] = 0.0
            else:
                for ci in range(cin):
                    row[base + ci] = feat[u, ci]
        o = np.dot(row, w2)
        for co in range(cout):
            y[i, co] = o[co] + bias[co]
    return y


@njit(cache=True, fastmath=True)
def sparse_conv_bwd_params(feat, nbr, gy):
    v, cin = feat.shape
    cout = gy.shape[1]
    gw = np.zeros((27, cin, cout), dtype=feat.dtype)
    gb = np.zeros(cout, dtype=feat.dtype)
    for i in range(v):
        for k in range(27):
            u = nbr[i, k]
            if u < 0:
                continue
            for ci in range(cin):
                f = feat[u, ci]
                if f != 0.0:
                    for co in range(cout):
                        gw[k, ci, co] += f * gy[i, co]
        for co in range(cout):
            gb[co] += gy[i, co]
    return gw, gb


BIG = 1e30


@njit(cache=True)
def _box_enter(ox, oy, oz, dx, dy, dz, cx, cy, hx, hy, h):
    if dx != 0.0:
        tx1 = (cx - hx - ox) / dx
        tx2 = (cx + hx - ox) / dx
        lox = min(tx1, tx2)
        hix = max(tx1, tx2)
    elif abs(ox - cx) <= hx:
        lox, hix = -BIG, BIG
    else:
        return BIG
    if dy != 0.0:
        ty1 = (cy - hy - oy) / dy
        ty2 = (cy + hy - oy) / dy
        loy = min(ty1, ty2)
        hiy = max(ty1, ty2)
    elif abs(oy - cy) <= hy:
        loy, hiy = -BIG, BIG
    else:
        return BIG
    if dz != 0.0:
        tz1 = (0.0 - oz) / dz
        tz2 = (h - oz) / dz
        loz = min(tz1, tz2)
        hiz = max(tz1, tz2)
    elif 0.0 <= oz <= h:
        loz, hiz = -BIG, BIG
    else:
        return BIG
    t_enter = max(lox, max(loy, loz))
    t_exit = min(hix, min(hiy, hiz))
    if t_enter <= t_exit and t_enter > 0.0:
        return t_enter
    return BIG


@njit(cache=True)
def _cylinder_enter(ox, oy, oz, dx, dy, dz, cx, cy, r, h):
    best = BIG
    fx = ox - cx
    fy = oy - cy
    a = dx * dx + dy * dy
    if a > 0.0:
        b = 2.0 * (fx * dx + fy * dy)
        c = fx * fx + fy * fy - r * r
        disc = b * b - 4.0 * a * c
        if disc >= 0.0:
            ts = (-b - np.sqrt(disc)) / (2.0 * a)
            zs = oz + dz * ts
            if ts > 0.0 and 0.0 <= zs <= h:
                best = ts
    if dz != 0.0:
        tc = (h - oz) / dz
        if 0.0 < tc < best:
            px = ox + dx * tc - cx
            py = oy + dy * tc - cy
            if px * px + py * py <= r * r:
                best = tc
    return best


@njit(cache=True)
def raycast_grid(dirs, origin, cls, hgt, kind, half_x, half_y, ocx, ocy,
                 x0, y0, cell, max_range):
    r = dirs.shape[0]
    gx, gy_ = cls.shape
    ox, oy, oz = origin[0], origin[1], origin[2]
    hit = np.zeros(r, np.bool_)
    t_hit = np.full(r, np.inf)
    c_hit = np.full(r, -1, np.int32)
    for n in range(r):
        dx, dy, dz = dirs[n, 0], dirs[n, 1], dirs[n, 2]
        t_ground = -oz / dz if dz < 0.0 else BIG
        ix = int(np.floor((ox - x0) / cell))
        iy = int(np.floor((oy - y0) / cell))
        stepx = 1 if dx > 0 else -1
        stepy = 1 if dy > 0 else -1
        if dx != 0.0:
            tmaxx = ((x0 + (ix + (1 if dx > 0 else 0)) * cell) - ox) / dx
            tdx = cell / abs(dx)
        else:
            tmaxx, tdx = BIG, BIG
        if dy != 0.0:
            tmaxy = ((y0 + (iy + (1 if dy > 0 else 0)) * cell) - oy) / dy
            tdy = cell / abs(dy)
        else:
            tmaxy, tdy = BIG, BIG
        t_in = 0.0
        found = False
        while 0 <= ix < gx and 0 <= iy < gy_ and t_in <= max_range:
            t_out = min(tmaxx, tmaxy)
            cand = BIG
            k = kind[ix, iy]
            if k == 1:
                cand = _box_enter(ox, oy, oz, dx, dy, dz, ocx[ix, iy],
                                  ocy[ix, iy], half_x[ix, iy], half_y[ix, iy],
                                  hgt[ix, iy])
            elif k == 2:
                cand = _cylinder_enter(ox, oy, oz, dx, dy, dz, ocx[ix, iy],
                                       ocy[ix, iy], half_x[ix, iy],
                                       hgt[ix, iy])
            grd = t_in <= t_ground < t_out
            if cand < BIG and (not grd or cand <= t_ground):
                if cand <= max_range:
                    hit[n] = True
                    t_hit[n] = cand
                    c_hit[n] = cls[ix, iy]
                found = True
                break
            if grd:
                if t_ground <= max_range:
                    hit[n] = True
                    t_hit[n] = t_ground
                    c_hit[n] = 0
                found = True
                break
            if tmaxx < tmaxy:
                t_in = tmaxx
                tmaxx += tdx
                ix += stepx
            else:
                t_in = tmaxy
                tmaxy += tdy
                iy += stepy
        if not found and t_ground < BIG and t_ground <= max_range:
            hit[n] = True
            t_hit[n] = t_ground
            c_hit[n] = 0
    return hit, t_hit, c_hit
