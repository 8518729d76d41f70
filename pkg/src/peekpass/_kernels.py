"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports cleanly and the environment
variable ``PEEKPASS_NUMBA`` is not set to ``0``. Both paths evaluate the
same floating-point expressions in the same order, so their outputs are
bit-identical; the test-suite checks this.
"""
import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get("PEEKPASS_NUMBA", "1") != "0"
BACKEND = "numba" if USE_NUMBA else "numpy"

# max elements of a temporary (rows x time x samples) block in the numpy path
_CHUNK = 1 << 21


def _range_box(shape, res, ox, oy, px, py, sensor_range):
    h, w = shape
    i0 = max(0, int(math.floor((py - sensor_range - oy) / res)))
    i1 = min(h - 1, int(math.floor((py + sensor_range - oy) / res)))
    j0 = max(0, int(math.floor((px - sensor_range - ox) / res)))
    j1 = min(w - 1, int(math.floor((px + sensor_range - ox) / res)))
    return i0, i1, j0, j1


# --------------------------------------------------------------------------
# visibility


def visibility_numpy(occ, res, ox, oy, px, py, sensor_range, agents):
    h, w = occ.shape
    out = np.zeros((h, w), dtype=np.bool_)
    i0, i1, j0, j1 = _range_box(occ.shape, res, ox, oy, px, py, sensor_range)
    if i1 < i0 or j1 < j0:
        return out
    ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    cx = ox + (jj + 0.5) * res
    cy = oy + (ii + 0.5) * res
    dx = cx - px
    dy = cy - py
    d2 = dx * dx + dy * dy
    keep = d2 <= sensor_range * sensor_range
    ii, jj, dx, dy, d2 = ii[keep], jj[keep], dx[keep], dy[keep], d2[keep]

    blocked = np.zeros(ii.shape, dtype=np.bool_)
    for a in range(agents.shape[0]):
        ax, ay, ar = agents[a, 0], agents[a, 1], agents[a, 2]
        rx = ax - px
        ry = ay - py
        with np.errstate(invalid="ignore", divide="ignore"):
            u = np.where(d2 > 0.0, (rx * dx + ry * dy) / d2, 0.0)
        u = np.minimum(np.maximum(u, 0.0), 1.0)
        ex = px + u * dx - ax
        ey = py + u * dy - ay
        blocked |= ex * ex + ey * ey < ar * ar

    step = res * 0.5
    d = np.sqrt(d2)
    n = np.ceil(d / step).astype(np.int64)
    nmax = int(n.max()) if n.size else 0
    for start in range(0, ii.size, max(1, _CHUNK // max(nmax, 1))):
        sl = slice(start, start + max(1, _CHUNK // max(nmax, 1)))
        ki = np.arange(1, max(nmax, 1))[None, :]
        ns = n[sl][:, None]
        valid = ki < ns
        f = ki / np.maximum(ns, 1)
        qx = px + f * dx[sl][:, None]
        qy = py + f * dy[sl][:, None]
        qj = np.floor((qx - ox) / res).astype(np.int64)
        qi = np.floor((qy - oy) / res).astype(np.int64)
        own = (qi == ii[sl][:, None]) & (qj == jj[sl][:, None])
        inb = (qi >= 0) & (qi < h) & (qj >= 0) & (qj < w)
        hit = np.zeros(qi.shape, dtype=np.bool_)
        m = valid & inb & ~own
        hit[m] = occ[qi[m], qj[m]] != 0
        hit |= valid & ~inb
        blocked[sl] |= hit.any(axis=1)
    out[ii[~blocked], jj[~blocked]] = True
    return out


def _visibility_numba_impl(occ, res, ox, oy, px, py, sensor_range, agents, i0, i1, j0, j1):
    h, w = occ.shape
    out = np.zeros((h, w), dtype=np.bool_)
    step = res * 0.5
    r2 = sensor_range * sensor_range
    for i in range(i0, i1 + 1):
        cy = oy + (i + 0.5) * res
        for j in range(j0, j1 + 1):
            cx = ox + (j + 0.5) * res
            dx = cx - px
            dy = cy - py
            d2 = dx * dx + dy * dy
            if d2 > r2:
                continue
            blocked = False
            for a in range(agents.shape[0]):
                ax = agents[a, 0]
                ay = agents[a, 1]
                ar = agents[a, 2]
                if d2 > 0.0:
                    u = ((ax - px) * dx + (ay - py) * dy) / d2
                else:
                    u = 0.0
                u = min(max(u, 0.0), 1.0)
                ex = px + u * dx - ax
                ey = py + u * dy - ay
                if ex * ex + ey * ey < ar * ar:
                    blocked = True
                    break
            if blocked:
                continue
            n = int(math.ceil(math.sqrt(d2) / step))
            for k in range(1, n):
                f = k / n
                qx = px + f * dx
                qy = py + f * dy
                qj = int(math.floor((qx - ox) / res))
                qi = int(math.floor((qy - oy) / res))
                if qi == i and qj == j:
                    continue
                if qi < 0 or qi >= h or qj < 0 or qj >= w or occ[qi, qj] != 0:
                    blocked = True
                    break
            if not blocked:
                out[i, j] = True
    return out


# --------------------------------------------------------------------------
# trajectory-vs-samples clearance


def min_gap_numpy(robot_xy, samples_xy, rsum):
    """Per (row, sample): min over time of centre distance minus ``rsum``."""
    n, t, _ = robot_xy.shape
    s = samples_xy.shape[0]
    out = np.empty((n, s))
    if n == 0 or s == 0:
        return out
    rows = max(1, _CHUNK // max(t * s, 1))
    for start in range(0, n, rows):
        r = robot_xy[start:start + rows]
        dx = r[:, None, :, 0] - samples_xy[None, :, :, 0]
        dy = r[:, None, :, 1] - samples_xy[None, :, :, 1]
        g = np.sqrt(dx * dx + dy * dy) - rsum[None, :, None]
        out[start:start + rows] = g.min(axis=2)
    return out


def _min_gap_numba_impl(robot_xy, samples_xy, rsum):
    n, t, _ = robot_xy.shape
    s = samples_xy.shape[0]
    out = np.empty((n, s))
    for a in range(n):
        for b in range(s):
            best = np.inf
            for k in range(t):
                dx = robot_xy[a, k, 0] - samples_xy[b, k, 0]
                dy = robot_xy[a, k, 1] - samples_xy[b, k, 1]
                g = math.sqrt(dx * dx + dy * dy) - rsum[b]
                if g < best:
                    best = g
            out[a, b] = best
    return out


# --------------------------------------------------------------------------
# phantom heading cones


def cone_numpy(open_cells, res, ox, oy, cells, headings, reach):
    """(F, H) flags: does ``reach`` metres of travel along each heading stay open?

    ``open_cells`` marks cells a phantom may walk through. Points still inside
    the spawn cell are ignored.
    """
    h, w = open_cells.shape
    f = cells.shape[0]
    step = res * 0.5
    m = int(round(reach / step))
    if f == 0:
        return np.zeros((0, headings.size), dtype=np.bool_)
    s = step * np.arange(1, m + 1)
    cx = ox + (cells[:, 1] + 0.5) * res
    cy = oy + (cells[:, 0] + 0.5) * res
    qx = cx[:, None, None] + s[None, None, :] * np.cos(headings)[None, :, None]
    qy = cy[:, None, None] + s[None, None, :] * np.sin(headings)[None, :, None]
    qj = np.floor((qx - ox) / res).astype(np.int64)
    qi = np.floor((qy - oy) / res).astype(np.int64)
    own = (qi == cells[:, 0][:, None, None]) & (qj == cells[:, 1][:, None, None])
    inb = (qi >= 0) & (qi < h) & (qj >= 0) & (qj < w)
    ok = np.zeros(qi.shape, dtype=np.bool_)
    ok[inb] = open_cells[qi[inb], qj[inb]]
    ok |= own
    return ok.all(axis=2)


def _cone_numba_impl(open_cells, res, ox, oy, cells, headings, reach):
    h, w = open_cells.shape
    f = cells.shape[0]
    nh = headings.shape[0]
    step = res * 0.5
    m = int(round(reach / step))
    out = np.zeros((f, nh), dtype=np.bool_)
    ch = np.cos(headings)
    sh = np.sin(headings)
    for a in range(f):
        ci = cells[a, 0]
        cj = cells[a, 1]
        cx = ox + (cj + 0.5) * res
        cy = oy + (ci + 0.5) * res
        for b in range(nh):
            good = True
            for k in range(1, m + 1):
                s = step * k
                qx = cx + s * ch[b]
                qy = cy + s * sh[b]
                qj = int(math.floor((qx - ox) / res))
                qi = int(math.floor((qy - oy) / res))
                if qi == ci and qj == cj:
                    continue
                if qi < 0 or qi >= h or qj < 0 or qj >= w or not open_cells[qi, qj]:
                    good = False
                    break
            out[a, b] = good
    return out


if numba is not None:
    _visibility_nb = numba.njit(cache=True)(_visibility_numba_impl)
    _min_gap_nb = numba.njit(cache=True)(_min_gap_numba_impl)
    _cone_nb = numba.njit(cache=True)(_cone_numba_impl)

    def visibility_numba(occ, res, ox, oy, px, py, sensor_range, agents):
        box = _range_box(occ.shape, res, ox, oy, px, py, sensor_range)
        return _visibility_nb(occ, float(res), float(ox), float(oy), float(px), float(py),
                              float(sensor_range), np.ascontiguousarray(agents, dtype=np.float64), *box)

    def min_gap_numba(robot_xy, samples_xy, rsum):
        return _min_gap_nb(np.ascontiguousarray(robot_xy, dtype=np.float64),
                           np.ascontiguousarray(samples_xy, dtype=np.float64),
                           np.ascontiguousarray(rsum, dtype=np.float64))

    def cone_numba(open_cells, res, ox, oy, cells, headings, reach):
        return _cone_nb(np.ascontiguousarray(open_cells), float(res), float(ox), float(oy),
                        np.ascontiguousarray(cells, dtype=np.int64),
                        np.ascontiguousarray(headings, dtype=np.float64), float(reach))
else:  # pragma: no cover
    visibility_numba = min_gap_numba = cone_numba = None


if USE_NUMBA:
    visibility, min_gap, cone = visibility_numba, min_gap_numba, cone_numba
else:
    visibility, min_gap, cone = visibility_numpy, min_gap_numpy, cone_numpy
