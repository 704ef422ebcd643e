"""Vectorized numpy twins of :mod:`holderlab.kernels._nb_core`.

Same pack layouts, same formulas; functions take and return arrays.
"""

import math

import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_TWO_M53 = 2.0**-53
_TWO_PI = 2.0 * math.pi


def _mulhilo(a, b):
    """128-bit product of uint64 arrays split into (hi, lo) words."""
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _MASK32) + (hl & _MASK32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * b


def philox4x64(c0, c1, c2, c3, k0, k1):
    """Philox4x64-10 on uint64 arrays (broadcast)."""
    c0, c1, c2, c3 = np.broadcast_arrays(*(np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3)))
    c0, c1, c2, c3 = c0.copy(), c1.copy(), c2.copy(), c3.copy()
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    with np.errstate(over="ignore"):
        for rnd in range(10):
            if rnd > 0:
                k0 = np.uint64((int(k0) + int(_W0)) & 0xFFFFFFFFFFFFFFFF)
                k1 = np.uint64((int(k1) + int(_W1)) & 0xFFFFFFFFFFFFFFFF)
            hi0, lo0 = _mulhilo(np.full_like(c0, _M0), c0)
            hi1, lo1 = _mulhilo(np.full_like(c2, _M1), c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def normals(k0, k1, stream, paths, steps):
    """Standard normals at broadcast ``(paths, steps)`` for one stream."""
    paths = np.asarray(paths, dtype=np.uint64)
    steps = np.asarray(steps, dtype=np.int64)
    paths, steps = np.broadcast_arrays(paths, steps)
    blk = (steps >> 2).astype(np.uint64)
    lane = steps & 3
    x0, x1, x2, x3 = philox4x64(blk, np.uint64(stream), paths, np.uint64(0), k0, k1)
    sh = np.uint64(11)
    first = lane < 2
    ua = np.where(first, x0, x2)
    ub = np.where(first, x1, x3)
    ua = ((ua >> sh).astype(np.float64) + 0.5) * _TWO_M53
    ub = ((ub >> sh).astype(np.float64) + 0.5) * _TWO_M53
    rad = np.sqrt(-2.0 * np.log(ua))
    ang = _TWO_PI * ub
    return np.where((lane & 1) == 0, rad * np.cos(ang), rad * np.sin(ang))


def clenshaw(c, u):
    b1 = np.zeros_like(u)
    b2 = np.zeros_like(u)
    u2 = 2.0 * u
    for k in range(len(c) - 1, 0, -1):
        b1, b2 = c[k] + u2 * b1 - b2, b1
    return c[0] + u * b1 - b2


def ramp(pack, o, x):
    """Ramp g, g', g'' on an array."""
    x = np.asarray(x, dtype=np.float64)
    a, r, h, norm, dnorm = pack[o], pack[o + 1], pack[o + 2], pack[o + 3], pack[o + 4]
    n = int(pack[o + 5])
    c = pack[o + 6:o + 6 + n]
    inside = (x > a) & (x < r)
    xi = np.where(inside, x, a + h)
    # lanes within ~1e-308 of a knot overflow; their bump factor is 0 anyway
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        ia = 1.0 / (xi - a)
        ir_ = 1.0 / (xi - r)
        d = xi - (a + h)
        e = -2.0 * d * d / (h * (h - d) * (h + d))
        ft = np.where(e > -700.0, np.exp(np.maximum(e, -700.0)), 0.0)
    g1 = ft / dnorm
    with np.errstate(over="ignore", invalid="ignore"):
        g2 = np.where(ft > 0.0, g1 * (ia * ia - ir_ * ir_), 0.0)
    left = xi <= a + h
    tl = np.where(left, xi - a, r - xi)
    s = clenshaw(c, 2.0 * tl / h - 1.0)
    gl = ft * tl * tl * s / norm
    g = np.where(left, gl, 1.0 - gl)
    g = np.where(inside, g, np.where(x >= r, 1.0, 0.0))
    g1 = np.where(inside, g1, 0.0)
    g2 = np.where(inside, g2, 0.0)
    return g, g1, g2


def phi(pack, x):
    x = np.asarray(x, dtype=np.float64)
    rv, r1, r2 = ramp(pack, 1, -np.abs(x))
    return rv, np.where(x < 0.0, r1, -r1), r2


def lam(lp, y):
    y = np.asarray(y, dtype=np.float64)
    y0, eps = lp[0], lp[1]
    d = y - y0
    r = np.abs(d)
    s = np.where(d > 0, 1.0, -1.0)
    g, g1, g2 = ramp(lp, 2, r)
    w = 5.0 * eps - r
    hv = r + w * g
    h1 = (1.0 - g) + w * g1
    h2 = -2.0 * g1 + w * g2
    ident = r <= 4.0 * eps
    clamp = r >= 5.0 * eps
    l0 = np.where(ident, y, np.where(clamp, y0 + s * 5.0 * eps, y0 + s * hv))
    l1 = np.where(ident, 1.0, np.where(clamp, 0.0, h1))
    l2 = np.where(ident | clamp, 0.0, s * h2)
    return l0, l1, l2


def expr(terms, x, order):
    x = np.asarray(x, dtype=np.float64)
    v = np.zeros_like(x)
    d1 = np.zeros_like(x)
    d2 = np.zeros_like(x)
    for kind, c, p1, p2 in terms:
        kind = int(kind)
        if kind == 0:
            v = v + c
        elif kind == 1:
            z = x - p1
            k = int(p2)
            if k == 0:
                v = v + c
            else:
                zk1 = z ** (k - 1)
                v = v + c * zk1 * z
                if order > 0:
                    d1 = d1 + c * k * zk1
                    if k >= 2:
                        d2 = d2 + c * k * (k - 1) * z ** (k - 2)
        elif kind == 2:
            arg = p1 * x + p2
            sv = np.sin(arg)
            v = v + c * sv
            if order > 0:
                d1 = d1 + c * p1 * np.cos(arg)
                d2 = d2 - c * p1 * p1 * sv
        elif kind == 3:
            arg = p1 * x + p2
            cv = np.cos(arg)
            v = v + c * cv
            if order > 0:
                d1 = d1 - c * p1 * np.sin(arg)
                d2 = d2 - c * p1 * p1 * cv
        elif kind == 4:
            z = x - p1
            az = np.abs(z)
            pos = az > 0.0
            safe = np.where(pos, az, 1.0)
            pw = np.where(pos, safe ** p2, 0.0)
            v = v + c * pw
            if order > 0:
                sg = np.where(z > 0, 1.0, -1.0)
                d1 = d1 + np.where(pos, c * p2 * pw / safe * sg, 0.0)
                d2 = d2 + np.where(pos, c * p2 * (p2 - 1.0) * pw / (safe * safe), 0.0)
        elif kind == 5:
            v = v + c * np.clip(x, p1, p2)
            if order > 0:
                d1 = d1 + np.where((x >= p1) & (x <= p2), c, 0.0)
        else:
            # frequencies double, so rotate (cos, sin) instead of calling libm
            cv = np.cos(x)
            sv = np.sin(x)
            w = c
            f = 1.0
            for _ in range(int(p2)):
                v = v + w * cv
                if order > 0:
                    d1 = d1 - w * f * sv
                    d2 = d2 - w * f * f * cv
                cv, sv = cv * cv - sv * sv, 2.0 * cv * sv
                w *= p1
                f *= 2.0
    return v, d1, d2


def coef(terms, lp, trunc, x, order):
    if trunc:
        l0, l1, l2 = lam(lp, x)
    else:
        x = np.asarray(x, dtype=np.float64)
        l0, l1, l2 = x, np.ones_like(x), np.zeros_like(x)
    v, d1, d2 = expr(terms, l0, order)
    if not trunc or order == 0:
        return v, d1, d2
    return v, d1 * l1, d2 * l1 * l1 + d1 * l2
