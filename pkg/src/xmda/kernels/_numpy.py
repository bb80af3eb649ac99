"""Pure-numpy reference implementations of the hot kernels.

These are the fallback path (``XMDA_NUMBA=0``) and the ground truth the
numba kernels are checked against. Dense convolutions go through
im2col + BLAS; scatter ops use ``np.add.at`` (unbuffered, deterministic).
"""

import numpy as np


def _im2col(x):
    """(B, H, W, C) -> (B*H*W, 9*C) patch matrix for a 3x3 same conv."""
    b, h, w, c = x.shape
    xp = np.zeros((b, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1:-1, 1:-1] = x
    cols = np.empty((b, h, w, 9 * c), dtype=x.dtype)
    k = 0
    for ky in range(3):
        for kx in range(3):
            cols[..., k * c:(k + 1) * c] = xp[:, ky:ky + h, kx:kx + w]
            k += 1
    return cols.reshape(b * h * w, 9 * c)


def conv3x3_fwd(x, w, bias):
    b, h, wd, cin = x.shape
    cout = w.shape[3]
    cols = _im2col(x)
    y = cols @ w.reshape(9 * cin, cout)
    y += bias
    return y.reshape(b, h, wd, cout)


def conv3x3_bwd_params(x, gy):
    b, h, wd, cin = x.shape
    cout = gy.shape[3]
    cols = _im2col(x)
    gw = cols.T @ gy.reshape(b * h * wd, cout)
    gb = gy.sum(axis=(0, 1, 2))
    return gw.reshape(3, 3, cin, cout), gb


def maxpool2_fwd(x):
    b, h, w, c = x.shape
    xv = x.reshape(b, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
    xv = xv.reshape(b, h // 2, w // 2, 4, c)
    idx = xv.argmax(axis=3).astype(np.int8)
    y = np.take_along_axis(xv, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return y, idx


def maxpool2_bwd(gy, idx, shape):
    b, h, w, c = shape
    gx = np.zeros(shape, dtype=gy.dtype)
    for q in range(4):
        dy, dx = q // 2, q % 2
        mask = idx == q
        sub = gx[:, dy::2, dx::2, :]
        sub[mask] += gy[mask]
    return gx


def scatter_rows_add(g, idx, nrows):
    out = np.zeros((nrows, g.shape[1]), dtype=g.dtype)
    np.add.at(out, idx, g)
    return out


def segment_mean_fwd(x, seg, nseg):
    counts = np.bincount(seg, minlength=nseg).astype(x.dtype)
    y = scatter_rows_add(x, seg, nseg)
    y /= counts[:, None]
    return y, counts


def gather_pixels(feat, bi, vi, ui):
    return feat[bi, vi, ui]


def scatter_pixels_add(shape, bi, vi, ui, g):
    b, h, w, c = shape
    flat = np.zeros((b * h * w, c), dtype=g.dtype)
    np.add.at(flat, (bi * h + vi) * w + ui, g)
    return flat.reshape(shape)


def _gathered_neighbors(feat, nbr):
    v, cin = feat.shape
    featz = np.concatenate([feat, np.zeros((1, cin), dtype=feat.dtype)], axis=0)
    idx = np.where(nbr < 0, v, nbr)
    return featz[idx].reshape(nbr.shape[0], 27 * cin)


def sparse_conv_fwd(feat, nbr, w, bias):
    cin, cout = w.shape[1], w.shape[2]
    cols = _gathered_neighbors(feat, nbr)
    return cols @ w.reshape(27 * cin, cout) + bias


def sparse_conv_bwd_params(feat, nbr, gy):
    cin = feat.shape[1]
    cols = _gathered_neighbors(feat, nbr)
    gw = cols.T @ gy
    return gw.reshape(27, cin, gy.shape[1]), gy.sum(axis=0)


def raycast_grid(dirs, origin, cls, hgt, kind, half_x, half_y, ocx, ocy,
                 x0, y0, cell, max_range):
    """Lockstep DDA over all rays. Mirrors the numba kernel step-for-step."""
    r = dirs.shape[0]
    ox, oy, oz = origin
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    gx, gy_ = cls.shape
    big = 1e30

    t_ground = np.where(dz < 0.0, -oz / np.where(dz < 0.0, dz, -1.0), big)

    ix = np.floor((ox - x0) / cell).astype(np.int64) + np.zeros(r, np.int64)
    iy = np.floor((oy - y0) / cell).astype(np.int64) + np.zeros(r, np.int64)
    stepx = np.where(dx > 0, 1, -1).astype(np.int64)
    stepy = np.where(dy > 0, 1, -1).astype(np.int64)
    nextx = x0 + (ix + (dx > 0)) * cell
    nexty = y0 + (iy + (dy > 0)) * cell
    with np.errstate(divide="ignore"):
        tmaxx = np.where(dx != 0, (nextx - ox) / np.where(dx != 0, dx, 1.0), big)
        tmaxy = np.where(dy != 0, (nexty - oy) / np.where(dy != 0, dy, 1.0), big)
        tdx = np.where(dx != 0, cell / np.abs(np.where(dx != 0, dx, 1.0)), big)
        tdy = np.where(dy != 0, cell / np.abs(np.where(dy != 0, dy, 1.0)), big)

    hit = np.zeros(r, bool)
    t_hit = np.full(r, big)
    c_hit = np.full(r, -1, np.int32)
    t_in = np.zeros(r)
    active = np.ones(r, bool)

    max_steps = 2 * (gx + gy_) + 4
    for _ in range(max_steps):
        if not active.any():
            break
        inside = active & (ix >= 0) & (ix < gx) & (iy >= 0) & (iy < gy_)
        t_out = np.minimum(tmaxx, tmaxy)

        # object intersection in the current cell
        cand_t = np.full(r, big)
        ci = np.clip(ix, 0, gx - 1)
        cj = np.clip(iy, 0, gy_ - 1)
        k = np.where(inside, kind[ci, cj], 0)
        h = hgt[ci, cj]
        hx = half_x[ci, cj]
        hy = half_y[ci, cj]
        cxw = ocx[ci, cj]
        cyw = ocy[ci, cj]

        box = k == 1
        if box.any():
            with np.errstate(divide="ignore", invalid="ignore"):
                tx1 = np.where(dx != 0, (cxw - hx - ox) / dx, -big)
                tx2 = np.where(dx != 0, (cxw + hx - ox) / dx, big)
                inx = (np.abs(ox - cxw) <= hx)
                lox = np.where(dx != 0, np.minimum(tx1, tx2), np.where(inx, -big, big))
                hix = np.where(dx != 0, np.maximum(tx1, tx2), np.where(inx, big, -big))
                ty1 = np.where(dy != 0, (cyw - hy - oy) / dy, -big)
                ty2 = np.where(dy != 0, (cyw + hy - oy) / dy, big)
                iny = (np.abs(oy - cyw) <= hy)
                loy = np.where(dy != 0, np.minimum(ty1, ty2), np.where(iny, -big, big))
                hiy = np.where(dy != 0, np.maximum(ty1, ty2), np.where(iny, big, -big))
                tz1 = np.where(dz != 0, (0.0 - oz) / dz, -big)
                tz2 = np.where(dz != 0, (h - oz) / dz, big)
                inz = (oz >= 0.0) & (oz <= h)
                loz = np.where(dz != 0, np.minimum(tz1, tz2), np.where(inz, -big, big))
                hiz = np.where(dz != 0, np.maximum(tz1, tz2), np.where(inz, big, -big))
            t_enter = np.maximum(np.maximum(lox, loy), loz)
            t_exit = np.minimum(np.minimum(hix, hiy), hiz)
            ok = box & (t_enter <= t_exit) & (t_enter > 0.0)
            cand_t = np.where(ok, t_enter, cand_t)

        cyl = k == 2
        if cyl.any():
            fx = ox - cxw
            fy = oy - cyw
            a = dx * dx + dy * dy
            b2 = 2.0 * (fx * dx + fy * dy)
            c2 = fx * fx + fy * fy - hx * hx
            disc = b2 * b2 - 4.0 * a * c2
            sq = np.sqrt(np.maximum(disc, 0.0))
            with np.errstate(divide="ignore", invalid="ignore"):
                ts = np.where(a > 0, (-b2 - sq) / (2.0 * a), big)
            zs = oz + dz * ts
            side_ok = cyl & (disc >= 0.0) & (ts > 0.0) & (zs >= 0.0) & (zs <= h)
            with np.errstate(divide="ignore"):
                tc = np.where(dz != 0, (h - oz) / dz, big)
            px = ox + dx * tc - cxw
            py = oy + dy * tc - cyw
            cap_ok = cyl & (tc > 0.0) & (px * px + py * py <= hx * hx)
            tcyl = np.where(side_ok, ts, big)
            tcyl = np.where(cap_ok & (tc < tcyl), tc, tcyl)
            cand_t = np.where(cyl & (tcyl < big), tcyl, cand_t)

        obj_ok = inside & (cand_t < big)
        grd_ok = inside & (t_ground >= t_in) & (t_ground < t_out)

        take_obj = obj_ok & (cand_t <= np.where(grd_ok, t_ground, big))
        take_grd = grd_ok & ~take_obj
        newly = active & (take_obj | take_grd)
        tt = np.where(take_obj, cand_t, t_ground)
        in_range = newly & (tt <= max_range)
        hit[in_range] = True
        t_hit[in_range] = tt[in_range]
        c_hit[in_range & take_obj] = cls[ci, cj][in_range & take_obj]
        c_hit[in_range & take_grd] = 0
        active &= ~newly

        advx = tmaxx < tmaxy
        t_in = np.where(active, np.where(advx, tmaxx, tmaxy), t_in)
        ix = np.where(active & advx, ix + stepx, ix)
        tmaxx = np.where(active & advx, tmaxx + tdx, tmaxx)
        iy = np.where(active & ~advx, iy + stepy, iy)
        tmaxy = np.where(active & ~advx, tmaxy + tdy, tmaxy)
        out = active & ((ix < 0) | (ix >= gx) | (iy < 0) | (iy >= gy_) |
                        (t_in > max_range))
        active &= ~out

    # rays that left the grid may still land on the bare ground plane
    left = ~hit & (t_ground < big) & (t_ground <= max_range)
    hit[left] = True
    t_hit[left] = t_ground[left]
    c_hit[left] = 0
    return hit, np.where(hit, t_hit, np.inf), c_hit
