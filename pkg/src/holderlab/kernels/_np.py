"""Pure-numpy path kernels, vectorized across the paths of a block.

Signatures mirror :mod:`holderlab.kernels._nb`; results agree with the
compiled kernels up to libm rounding differences.
"""

import numpy as np

from ._np_core import coef, philox4x64, phi

STREAM_MAIN = 0
STREAM_WINDOW = 1
STREAM_PRE = 2

_TWO_M53 = 2.0**-53


def normals_block(k0, k1, stream, p0, step0, out):
    """Fill ``out[i, j]`` with the normal for path ``p0 + i`` and step ``step0 + j``."""
    n, m = out.shape
    if n == 0 or m == 0:
        return
    b_lo = step0 >> 2
    b_hi = (step0 + m - 1) >> 2
    blocks = np.arange(b_lo, b_hi + 1, dtype=np.uint64)
    paths = np.arange(p0, p0 + n, dtype=np.uint64)
    x0, x1, x2, x3 = philox4x64(blocks[None, :], np.uint64(stream), paths[:, None],
                                np.uint64(0), k0, k1)
    sh = np.uint64(11)
    u = [((w >> sh).astype(np.float64) + 0.5) * _TWO_M53 for w in (x0, x1, x2, x3)]
    ra = np.sqrt(-2.0 * np.log(u[0]))
    rb = np.sqrt(-2.0 * np.log(u[2]))
    z = np.empty((n, len(blocks), 4))
    z[:, :, 0] = ra * np.cos(2.0 * np.pi * u[1])
    z[:, :, 1] = ra * np.sin(2.0 * np.pi * u[1])
    z[:, :, 2] = rb * np.cos(2.0 * np.pi * u[3])
    z[:, :, 3] = rb * np.sin(2.0 * np.pi * u[3])
    off = step0 - 4 * b_lo
    out[:] = z.reshape(n, -1)[:, off:off + m]


def euler_block(sig, b, lp, trunc, x0, dt, n_steps, sub, k0, k1, stream, p0, step0,
                X, xT, bad):
    n = xT.shape[0]
    record = X.shape[0] > 0
    zs = np.empty((n, n_steps * sub))
    normals_block(k0, k1, stream, p0, step0, zs)
    sq = np.sqrt(dt / sub)
    x = np.array(x0, dtype=np.float64, copy=True)
    bad[:] = -1
    if record:
        X[:, 0] = x
    for k in range(n_steps):
        dw = zs[:, k * sub:(k + 1) * sub].sum(axis=1) * sq if sub > 1 else zs[:, k] * sq
        sv = coef(sig, lp, trunc, x, 0)[0]
        bv = coef(b, lp, trunc, x, 0)[0]
        x = x + bv * dt + sv * dw
        if record:
            X[:, k + 1] = x
        newly = (~np.isfinite(x)) & (bad < 0)
        bad[newly] = k + 1
    xT[:] = x


def event_block(sig, b, lp, phipack, y0, eps, x0, dt_pre, n_pre, dt, n_d, k0, k1, p0,
                Xrec, Xbrec, xs, xT, nu, tau, supinc, phipos, label, bad):
    n = xT.shape[0]
    zp = np.empty((n, n_pre))
    normals_block(k0, k1, STREAM_PRE, p0, 0, zp)
    # X-bar may run up to n_d steps past t, so draw the longer range once
    zs = np.empty((n, 2 * n_d))
    normals_block(k0, k1, STREAM_MAIN, p0, 0, zs)
    x = np.full(n, float(x0))
    sqp = np.sqrt(dt_pre)
    for k in range(n_pre):
        sv = coef(sig, lp, False, x, 0)[0]
        bv = coef(b, lp, False, x, 0)[0]
        x = x + bv * dt_pre + sv * sqp * zp[:, k]
    xs[:] = x
    sq = np.sqrt(dt)
    win = np.empty((n, n_d + 1))
    for k in range(n_d):
        win[:, k] = x
        sv = coef(sig, lp, False, x, 0)[0]
        bv = coef(b, lp, False, x, 0)[0]
        x = x + bv * dt + sv * sq * zs[:, k]
    win[:, n_d] = x
    xT[:] = x
    bad[:] = np.where(np.isfinite(x), -1, n_pre + n_d)
    if Xrec.shape[0] > 0:
        Xrec[:] = win
    inner = np.abs(win - y0) <= 3.0 * eps
    has_nu = inner.any(axis=1)
    jnu = np.where(has_nu, inner.argmax(axis=1), 0)
    nui = np.where(has_nu, jnu, -1)
    cols = np.arange(n_d + 1)[None, :]
    outer = (np.abs(win - y0) > 4.0 * eps) & (cols >= jnu[:, None])
    has_tau = has_nu & outer.any(axis=1)
    taui = np.where(has_tau, outer.argmax(axis=1), -1)
    rows = np.arange(n)
    xb = win[rows, jnu].copy()
    start = xb.copy()
    sup = np.zeros(n)
    if Xbrec.shape[0] > 0:
        Xbrec[:, 0] = np.where(has_nu, xb, np.nan)
    for k in range(n_d):
        z = zs[rows, jnu + k]
        sv = coef(sig, lp, True, xb, 0)[0]
        bv = coef(b, lp, True, xb, 0)[0]
        xb = xb + bv * dt + sv * sq * z
        sup = np.maximum(sup, np.abs(xb - start))
        if Xbrec.shape[0] > 0:
            Xbrec[:, k + 1] = np.where(has_nu, xb, np.nan)
    sup = np.where(has_nu, sup, 0.0)
    pos = phi(phipack, x - y0)[0] > 0.0
    lab = np.zeros(n, dtype=np.int8)
    is_a = pos & (nui == 0) & (taui < 0)
    is_c = pos & ~is_a & has_nu & (sup >= eps)
    lab[is_a] = 1
    lab[is_c] = 2
    nu[:] = nui
    tau[:] = taui
    supinc[:] = sup
    phipos[:] = pos
    label[:] = lab


def window_block(sig, b, lp, y, dt, m, k0, k1, stream, p0, step0, drift,
                 X, xT, logz, zsde, i6, sw):
    n = xT.shape[0]
    zs = np.empty((n, m))
    normals_block(k0, k1, stream, p0, step0, zs)
    sq = np.sqrt(dt)
    x = np.array(y, dtype=np.float64, copy=True)
    psi0 = coef(b, lp, True, x, 0)[0] / coef(sig, lp, True, x, 0)[0]
    z = np.ones(n)
    lz = np.zeros(n)
    acc = np.zeros(n)
    sacc = np.zeros(n)
    if X.shape[0] > 0:
        X[:, 0] = x
    for k in range(m):
        dw = sq * zs[:, k]
        sv = coef(sig, lp, True, x, 0)[0]
        bv = coef(b, lp, True, x, 0)[0]
        ps = bv / sv
        dif = ps * np.exp(lz) - psi0
        acc += dif * dif * dt
        lz += ps * dw - 0.5 * ps * ps * dt
        z = z * (1.0 + ps * dw)
        x = x + sv * dw
        if drift:
            x = x + bv * dt
        sacc += dw
        if X.shape[0] > 0:
            X[:, k + 1] = x
    xT[:] = x
    logz[:] = lz
    zsde[:] = z
    i6[:] = acc
    sw[:] = sacc


def malliavin_block(sig, lp, trunc, phipack, yc, ystart, dt, m, k0, k1, stream, p0,
                    step0, general, cf, fkind, gkind, order, F, G, H1, H2, M, SDX):
    n = F.shape[0]
    zs = np.empty((n, m))
    normals_block(k0, k1, stream, p0, step0, zs)
    dws = np.sqrt(dt) * zs
    x = np.array(ystart, dtype=np.float64, copy=True)
    s_ = np.empty((n, m))
    s1 = np.empty((n, m))
    s2 = np.empty((n, m))
    S = np.zeros(n)
    for k in range(m):
        v, d1, d2 = coef(sig, lp, trunc, x, 1)
        s_[:, k], s1[:, k], s2[:, k] = v, d1, d2
        x = x + v * dws[:, k]
        S = S + dws[:, k]
    av = 1.0 + s1 * dws
    Phi = np.empty((n, m + 1))
    Gam = np.empty((n, m + 1))
    Phi[:, m] = 1.0
    Gam[:, m] = 0.0
    for k in range(m - 1, -1, -1):
        Gam[:, k] = s2[:, k] * dws[:, k] * Phi[:, k + 1] + av[:, k] ** 2 * Gam[:, k + 1]
        Phi[:, k] = av[:, k] * Phi[:, k + 1]
    dx = s_ * Phi[:, 1:]
    sdx = dx.sum(axis=1)
    SDX[:] = sdx
    ck = Gam[:, 1:] * av * s_ + s1 * Phi[:, 1:]
    if general:
        mf = dt * np.sum(dx * dx, axis=1)
        ito = np.sum(dx * dws, axis=1)
        # D[j, k] = s_j prod_{j<i<k} a_i for j < k
        A = np.zeros((n, m))
        Bv = np.zeros((n, m))
        dvec = np.zeros((n, m))
        for k in range(m):
            A[:, :k] += (dx[:, k] * ck[:, k])[:, None] * dvec[:, :k]
            Bv[:, k] = ck[:, k] * np.sum(dx[:, :k] * dvec[:, :k], axis=1)
            dvec[:, :k] *= av[:, k][:, None]
            dvec[:, k] = s_[:, k]
        hkk = Gam[:, 1:] * s_ * s_
        dm = 2.0 * dt * (A + dx * hkk + Bv)
        div = np.sum(hkk / mf[:, None] - dx * dm / (mf * mf)[:, None], axis=1)
        F[:] = x
        G[:] = 1.0
        M[:] = mf
        H1[:] = ito / mf - dt * div
        H2[:] = np.nan
        return
    sd = np.zeros(n)
    hsum = np.zeros(n)
    for k in range(m):
        hsum += Gam[:, k + 1] * s_[:, k] ** 2 + 2.0 * ck[:, k] * sd
        sd = av[:, k] * sd + s_[:, k]
    if gkind == 0:
        g = np.ones(n)
        g1 = np.zeros(n)
        g2 = np.zeros(n)
    else:
        p0v, p1v, p2v = phi(phipack, x - yc)
        if gkind == 1:
            g = p0v
            g1 = p1v * sdx
            g2 = p2v * sdx * sdx + p1v * hsum
        else:
            g = p0v * S
            g1 = p1v * S * sdx + m * p0v
            g2 = S * (p2v * sdx * sdx + p1v * hsum) + 2.0 * m * p1v * sdx
    mf = cf * cf * m * dt
    q = cf / mf
    h1 = q * (g * S - dt * g1)
    F[:] = S if fkind == 0 else x
    G[:] = g
    M[:] = mf
    H1[:] = h1
    if order == 2:
        H2[:] = q * (h1 * S - dt * q * (S * g1 + m * g - dt * g2))
    else:
        H2[:] = np.nan


def charfn_block(x, w, thetas, phipack, y0, out):
    v = phi(phipack, np.asarray(x) - y0)[0] * w
    keep = v != 0.0
    v = v[keep]
    xs = np.asarray(x)[keep]
    kk = len(thetas)
    out[kk, 0] += np.sum(v)
    for j in range(kk):
        arg = thetas[j] * xs
        a = np.abs(arg)
        re = v * np.cos(a)
        im = v * np.sin(a)
        im = np.where(arg < 0.0, -im, im)
        out[j, 0] += np.sum(re)
        out[j, 1] += np.sum(im)
        out[j, 2] += np.sum(re * re)
        out[j, 3] += np.sum(im * im)
