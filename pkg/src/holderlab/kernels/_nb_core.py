"""Scalar numba primitives shared by the compiled kernels.

Everything here works on flat float64 "packs" so that compiled code never
sees Python objects:

ramp pack (at offset ``o``)
    ``[a, r, h, norm, dnorm, n, c_0 .. c_{n-1}]`` where ``h = (r - a) / 2``,
    ``norm = 2 h^2 S(m)`` normalizes the (rescaled) Chebyshev factor ``S``
    and ``dnorm`` is the integral of the bump relative to its midpoint value.
phi pack
    ``[o_fall, <rise ramp pack>, <fall ramp pack>]``; rise pack starts at 1.
lambda pack
    ``[y0, eps, <ramp pack for (4 eps, 5 eps)>]``.
term table
    ``(n, 4)`` rows ``[kind, c, p1, p2]``, see :mod:`holderlab.coeffs`.
"""

import math

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.extending import intrinsic

JIT = dict(cache=True, nogil=True, error_model="numpy")
# inlined at IR level so array arguments skip refcounting on every call
INLINE = dict(JIT, inline="always")

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_SH11 = np.uint64(11)
_TWO_M53 = 2.0**-53
_TWO_PI = 2.0 * math.pi


@intrinsic
def _umulhi(typingctx, a, b):
    """High 64 bits of the 128-bit product of two uint64 values."""
    sig = types.uint64(types.uint64, types.uint64)

    def codegen(context, builder, signature, args):
        i128 = ir.IntType(128)
        x = builder.zext(args[0], i128)
        y = builder.zext(args[1], i128)
        p = builder.mul(x, y)
        return builder.trunc(builder.lshr(p, ir.Constant(i128, 64)), ir.IntType(64))

    return sig, codegen


@njit(**INLINE)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Philox4x64-10 block function on a 256-bit counter and 128-bit key."""
    for rnd in range(10):
        if rnd > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0 = _umulhi(_M0, c0)
        lo0 = _M0 * c0
        hi1 = _umulhi(_M1, c2)
        lo1 = _M1 * c2
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit(**INLINE)
def normal_block(k0, k1, stream, path, blk, buf):
    """Four standard normals for counter ``(blk, stream, path, 0)``."""
    x0, x1, x2, x3 = philox4x64(np.uint64(blk), np.uint64(stream), np.uint64(path),
                                np.uint64(0), k0, k1)
    u0 = (float(x0 >> _SH11) + 0.5) * _TWO_M53
    u1 = (float(x1 >> _SH11) + 0.5) * _TWO_M53
    u2 = (float(x2 >> _SH11) + 0.5) * _TWO_M53
    u3 = (float(x3 >> _SH11) + 0.5) * _TWO_M53
    ra = math.sqrt(-2.0 * math.log(u0))
    rb = math.sqrt(-2.0 * math.log(u2))
    buf[0] = ra * math.cos(_TWO_PI * u1)
    buf[1] = ra * math.sin(_TWO_PI * u1)
    buf[2] = rb * math.cos(_TWO_PI * u3)
    buf[3] = rb * math.sin(_TWO_PI * u3)


@njit(**JIT)
def fill_normals(k0, k1, stream, path, step0, out):
    """Write normals for steps ``step0 .. step0+len(out)-1`` into ``out``."""
    buf = np.empty(4)
    blk = -1
    for i in range(out.shape[0]):
        s = step0 + i
        b = s >> 2
        if b != blk:
            normal_block(k0, k1, stream, path, b, buf)
            blk = b
        out[i] = buf[s & 3]


@njit(**INLINE)
def clenshaw(pack, off, n, u):
    b1 = 0.0
    b2 = 0.0
    u2 = 2.0 * u
    for k in range(n - 1, 0, -1):
        b1, b2 = pack[off + k] + u2 * b1 - b2, b1
    return pack[off] + u * b1 - b2


@njit(**INLINE)
def ramp(pack, o, x):
    """Normalized ramp g and its first two derivatives at ``x``."""
    a = pack[o]
    r = pack[o + 1]
    if x <= a:
        return 0.0, 0.0, 0.0
    if x >= r:
        return 1.0, 0.0, 0.0
    h = pack[o + 2]
    norm = pack[o + 3]
    dnorm = pack[o + 4]
    n = int(pack[o + 5])
    ia = 1.0 / (x - a)
    ir_ = 1.0 / (x - r)
    d = x - (a + h)
    # exponent relative to the midpoint, written without cancellation
    e = -2.0 * d * d / (h * (h - d) * (h + d))
    ft = math.exp(e) if e > -700.0 else 0.0
    g1 = ft / dnorm
    # ia^2 can overflow where ft has already underflowed to 0
    g2 = g1 * (ia * ia - ir_ * ir_) if ft > 0.0 else 0.0
    if x <= a + h:
        tl = x - a
    else:
        tl = r - x
    s = clenshaw(pack, o + 6, n, 2.0 * tl / h - 1.0)
    gl = ft * tl * tl * s / norm
    if x <= a + h:
        return gl, g1, g2
    return 1.0 - gl, g1, g2


@njit(**INLINE)
def phi(pack, x):
    """Localizing bump phi_eps and derivatives.

    Evaluated on the rising side at ``-|x|`` so that evenness is exact.
    """
    rv, r1, r2 = ramp(pack, 1, -abs(x))
    return rv, (r1 if x < 0.0 else -r1), r2


@njit(**INLINE)
def lam(lp, y):
    """Truncation lambda(y) with first and second derivatives."""
    y0 = lp[0]
    eps = lp[1]
    d = y - y0
    r = abs(d)
    if r <= 4.0 * eps:
        return y, 1.0, 0.0
    s = 1.0 if d > 0 else -1.0
    if r >= 5.0 * eps:
        return y0 + s * 5.0 * eps, 0.0, 0.0
    g, g1, g2 = ramp(lp, 2, r)
    w = 5.0 * eps - r
    hv = r + w * g
    h1 = (1.0 - g) + w * g1
    h2 = -2.0 * g1 + w * g2
    return y0 + s * hv, h1, s * h2


@njit(**INLINE)
def expr(terms, x, order):
    """Sum of registry terms and (if ``order`` > 0) two derivatives."""
    v = 0.0
    d1 = 0.0
    d2 = 0.0
    for i in range(terms.shape[0]):
        kind = int(terms[i, 0])
        c = terms[i, 1]
        p1 = terms[i, 2]
        p2 = terms[i, 3]
        if kind == 0:
            v += c
        elif kind == 1:
            z = x - p1
            k = int(p2)
            if k == 0:
                v += c
            else:
                # repeated products; numba's float ** int slows the whole loop
                zk2 = 1.0
                for _ in range(k - 2):
                    zk2 *= z
                zk1 = zk2 * z if k >= 2 else 1.0
                if k < 2:
                    zk2 = 0.0
                v += c * zk1 * z
                if order > 0:
                    d1 += c * k * zk1
                    d2 += c * k * (k - 1) * zk2
        elif kind == 2:
            arg = p1 * x + p2
            sv = math.sin(arg)
            v += c * sv
            if order > 0:
                d1 += c * p1 * math.cos(arg)
                d2 -= c * p1 * p1 * sv
        elif kind == 3:
            arg = p1 * x + p2
            cv = math.cos(arg)
            v += c * cv
            if order > 0:
                d1 -= c * p1 * math.sin(arg)
                d2 -= c * p1 * p1 * cv
        elif kind == 4:
            z = x - p1
            az = abs(z)
            if az > 0.0:
                pw = math.pow(az, p2)
                v += c * pw
                if order > 0:
                    sg = 1.0 if z > 0 else -1.0
                    d1 += c * p2 * pw / az * sg
                    d2 += c * p2 * (p2 - 1.0) * pw / (az * az)
        elif kind == 5:
            if x < p1:
                v += c * p1
            elif x > p2:
                v += c * p2
            else:
                v += c * x
                if order > 0:
                    d1 += c
        else:
            cv = math.cos(x)
            sv = math.sin(x)
            w = c
            f = 1.0
            for _ in range(int(p2)):
                v += w * cv
                if order > 0:
                    d1 -= w * f * sv
                    d2 -= w * f * f * cv
                cv, sv = cv * cv - sv * sv, 2.0 * cv * sv
                w *= p1
                f *= 2.0
    return v, d1, d2


@njit(**INLINE)
def coef(terms, lp, trunc, x, order):
    """Coefficient value, optionally composed with lambda, plus derivatives."""
    if trunc:
        l0, l1, l2 = lam(lp, x)
    else:
        l0, l1, l2 = x, 1.0, 0.0
    v, d1, d2 = expr(terms, l0, order)
    if not trunc or order == 0:
        return v, d1, d2
    return v, d1 * l1, d2 * l1 * l1 + d1 * l2
