"""Compiled path kernels (numba backend).

Each kernel processes one block of consecutive path indices starting at
``p0`` and writes into caller-owned output arrays. Noise for path ``p``,
stream ``s`` and fine step ``k`` is the Philox normal at counter
``(k // 4, s, p, 0)`` lane ``k % 4``.
"""

import math

import numpy as np
from numba import njit

from ._nb_core import JIT, coef, normal_block, phi

STREAM_MAIN = 0
STREAM_WINDOW = 1
STREAM_PRE = 2


@njit(**JIT)
def euler_block(sig, b, lp, trunc, x0, dt, n_steps, sub, k0, k1, stream, p0, step0,
                X, xT, bad):
    """Euler-Maruyama for ``n_steps`` coarse steps of ``sub`` fine increments."""
    n = xT.shape[0]
    record = X.shape[0] > 0
    sq = math.sqrt(dt / sub)
    buf = np.empty(4)
    for i in range(n):
        path = p0 + i
        x = x0[i]
        blk = -1
        bad[i] = -1
        if record:
            X[i, 0] = x
        for k in range(n_steps):
            dw = 0.0
            for j in range(sub):
                s = step0 + k * sub + j
                bb = s >> 2
                if bb != blk:
                    normal_block(k0, k1, stream, path, bb, buf)
                    blk = bb
                dw += buf[s & 3]
            dw *= sq
            sv = coef(sig, lp, trunc, x, 0)[0]
            bv = coef(b, lp, trunc, x, 0)[0]
            x = x + bv * dt + sv * dw
            if record:
                X[i, k + 1] = x
            if not math.isfinite(x):
                bad[i] = k + 1
                break
        xT[i] = x


@njit(**JIT)
def event_block(sig, b, lp, phipack, y0, eps, x0, dt_pre, n_pre, dt, n_d, k0, k1, p0,
                Xrec, Xbrec, xs, xT, nu, tau, supinc, phipos, label, bad):
    """X on ``[0, t - delta]`` (coarse, stream 2) then the window (fine, stream 0).

    nu/tau are window step indices (-1 encodes +infinity). X-bar restarts at
    nu with b-bar, sigma-bar and the window increments from step nu on, so it
    shares noise with X wherever both are defined. ``label``: 0 neither,
    1 A, 2 C.
    """
    n = xT.shape[0]
    rec = Xrec.shape[0] > 0
    sqp = math.sqrt(dt_pre)
    sq = math.sqrt(dt)
    buf = np.empty(4)
    win = np.empty(n_d + 1)
    for i in range(n):
        path = p0 + i
        x = x0
        bad[i] = -1
        blk = -1
        for k in range(n_pre):
            bb = k >> 2
            if bb != blk:
                normal_block(k0, k1, STREAM_PRE, path, bb, buf)
                blk = bb
            sv = coef(sig, lp, False, x, 0)[0]
            bv = coef(b, lp, False, x, 0)[0]
            x = x + bv * dt_pre + sv * sqp * buf[k & 3]
        xs[i] = x
        blk = -1
        for k in range(n_d):
            bb = k >> 2
            if bb != blk:
                normal_block(k0, k1, STREAM_MAIN, path, bb, buf)
                blk = bb
            win[k] = x
            sv = coef(sig, lp, False, x, 0)[0]
            bv = coef(b, lp, False, x, 0)[0]
            x = x + bv * dt + sv * sq * buf[k & 3]
        win[n_d] = x
        xT[i] = x
        if not math.isfinite(x):
            bad[i] = n_pre + n_d
        if rec:
            for k in range(n_d + 1):
                Xrec[i, k] = win[k]
        nui = -1
        for j in range(n_d + 1):
            if abs(win[j] - y0) <= 3.0 * eps:
                nui = j
                break
        taui = -1
        if nui >= 0:
            for j in range(nui, n_d + 1):
                if abs(win[j] - y0) > 4.0 * eps:
                    taui = j
                    break
        sup = 0.0
        if nui >= 0:
            xb = win[nui]
            start = xb
            if rec:
                Xbrec[i, 0] = xb
            blk = -1
            for k in range(n_d):
                s = nui + k
                bb = s >> 2
                if bb != blk:
                    normal_block(k0, k1, STREAM_MAIN, path, bb, buf)
                    blk = bb
                sv = coef(sig, lp, True, xb, 0)[0]
                bv = coef(b, lp, True, xb, 0)[0]
                xb = xb + bv * dt + sv * sq * buf[s & 3]
                if rec:
                    Xbrec[i, k + 1] = xb
                inc = abs(xb - start)
                if inc > sup:
                    sup = inc
        elif rec:
            for k in range(n_d + 1):
                Xbrec[i, k] = np.nan
        pos = phi(phipack, x - y0)[0] > 0.0
        nu[i] = nui
        tau[i] = taui
        supinc[i] = sup
        phipos[i] = pos
        lab = 0
        if pos and nui == 0 and taui < 0:
            lab = 1
        elif pos and nui >= 0 and sup >= eps:
            lab = 2
        label[i] = lab


@njit(**JIT)
def window_block(sig, b, lp, y, dt, m, k0, k1, stream, p0, step0, drift,
                 X, xT, logz, zsde, i6, sw):
    """Localized X-bar over one window with Girsanov weights.

    Under P (``drift`` False) X-bar is driftless; ``logz`` is the exponential
    form of Z, ``zsde`` its Euler product form and ``i6`` accumulates
    ``sum |psi(X_k) Z_k - psi(y)|^2 dt`` along the pair with the
    exponential form of Z at left points.
    """
    n = xT.shape[0]
    rec = X.shape[0] > 0
    sq = math.sqrt(dt)
    buf = np.empty(4)
    for i in range(n):
        path = p0 + i
        x = y[i]
        s0 = coef(sig, lp, True, x, 0)[0]
        psi0 = coef(b, lp, True, x, 0)[0] / s0
        z = 1.0
        lz = 0.0
        acc = 0.0
        sacc = 0.0
        blk = -1
        if rec:
            X[i, 0] = x
        for k in range(m):
            s = step0 + k
            bb = s >> 2
            if bb != blk:
                normal_block(k0, k1, stream, path, bb, buf)
                blk = bb
            dw = sq * buf[s & 3]
            sv = coef(sig, lp, True, x, 0)[0]
            bv = coef(b, lp, True, x, 0)[0]
            ps = bv / sv
            dif = ps * math.exp(lz) - psi0
            acc += dif * dif * dt
            lz += ps * dw - 0.5 * ps * ps * dt
            z = z * (1.0 + ps * dw)
            x = x + sv * dw
            if drift:
                x += bv * dt
            sacc += dw
            if rec:
                X[i, k + 1] = x
        xT[i] = x
        logz[i] = lz
        zsde[i] = z
        i6[i] = acc
        sw[i] = sacc


@njit(**JIT)
def malliavin_block(sig, lp, trunc, phipack, yc, ystart, dt, m, k0, k1, stream, p0,
                    step0, general, cf, fkind, gkind, order, F, G, H1, H2, M, SDX):
    """Integration-by-parts weights on driftless Euler chains.

    Discrete Malliavin derivatives are partials with respect to the
    increments; the divergence of ``u_k`` is ``sum u_k dW_k - dt sum d_k u_k``.
    ``general`` selects the non-linear F = X-bar case (G = 1, order 1) that
    needs the full second variation; otherwise DF is the constant ``cf``.
    """
    n = F.shape[0]
    sq = math.sqrt(dt)
    buf = np.empty(4)
    xs = np.empty(m + 1)
    s_ = np.empty(m)
    s1 = np.empty(m)
    s2 = np.empty(m)
    dws = np.empty(m)
    av = np.empty(m)
    Phi = np.empty(m + 1)
    Gam = np.empty(m + 1)
    dx = np.empty(m)
    dvec = np.empty(m)
    A = np.empty(m)
    Bv = np.empty(m)
    for i in range(n):
        path = p0 + i
        x = ystart[i]
        S = 0.0
        blk = -1
        for k in range(m):
            st = step0 + k
            bb = st >> 2
            if bb != blk:
                normal_block(k0, k1, stream, path, bb, buf)
                blk = bb
            dw = sq * buf[st & 3]
            v, d1, d2 = coef(sig, lp, trunc, x, 1)
            xs[k] = x
            s_[k] = v
            s1[k] = d1
            s2[k] = d2
            dws[k] = dw
            av[k] = 1.0 + d1 * dw
            x = x + v * dw
            S += dw
        xs[m] = x
        Phi[m] = 1.0
        Gam[m] = 0.0
        for k in range(m - 1, -1, -1):
            Gam[k] = s2[k] * dws[k] * Phi[k + 1] + av[k] * av[k] * Gam[k + 1]
            Phi[k] = av[k] * Phi[k + 1]
        sdx = 0.0
        for k in range(m):
            dx[k] = s_[k] * Phi[k + 1]
            sdx += dx[k]
        SDX[i] = sdx
        if general:
            mf = 0.0
            ito = 0.0
            for k in range(m):
                mf += dx[k] * dx[k]
                ito += dx[k] * dws[k]
                A[k] = 0.0
            mf *= dt
            for k in range(m):
                ck = Gam[k + 1] * av[k] * s_[k] + s1[k] * Phi[k + 1]
                acc = 0.0
                for j in range(k):
                    A[j] += dx[k] * ck * dvec[j]
                    acc += dx[j] * dvec[j]
                Bv[k] = ck * acc
                for j in range(k):
                    dvec[j] *= av[k]
                dvec[k] = s_[k]
            div = 0.0
            for k in range(m):
                hkk = Gam[k + 1] * s_[k] * s_[k]
                dm = 2.0 * dt * (A[k] + dx[k] * hkk + Bv[k])
                div += hkk / mf - dx[k] * dm / (mf * mf)
            F[i] = x
            G[i] = 1.0
            M[i] = mf
            H1[i] = ito / mf - dt * div
            H2[i] = np.nan
            continue
        # sum over all (j, k) of the Hessian of X-bar_t
        hsum = 0.0
        sd = 0.0
        for k in range(m):
            ck = Gam[k + 1] * av[k] * s_[k] + s1[k] * Phi[k + 1]
            hsum += Gam[k + 1] * s_[k] * s_[k] + 2.0 * ck * sd
            sd = av[k] * sd + s_[k]
        if gkind == 0:
            g = 1.0
            g1 = 0.0
            g2 = 0.0
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
        F[i] = S if fkind == 0 else x
        G[i] = g
        M[i] = mf
        H1[i] = h1
        if order == 2:
            H2[i] = q * (h1 * S - dt * q * (S * g1 + m * g - dt * g2))
        else:
            H2[i] = np.nan


@njit(**JIT)
def charfn_block(x, w, thetas, phipack, y0, out):
    """Per-theta sums of Re, Im and their squares of ``w phi(x - y0) e^{i theta x}``.

    ``out`` has shape ``(K + 1, 4)``; the last row holds the plain weighted
    mass in column 0. Zero-weight samples are skipped (adding 0.0 is exact).
    """
    kk = thetas.shape[0]
    for i in range(x.shape[0]):
        v = phi(phipack, x[i] - y0)[0] * w[i]
        if v == 0.0:
            continue
        out[kk, 0] += v
        for j in range(kk):
            # evaluate at |arg| so that conjugate symmetry in theta is exact
            arg = thetas[j] * x[i]
            a = abs(arg)
            re = v * math.cos(a)
            im = v * math.sin(a)
            if arg < 0.0:
                im = -im
            out[j, 0] += re
            out[j, 1] += im
            out[j, 2] += re * re
            out[j, 3] += im * im


@njit(**JIT)
def normals_block(k0, k1, stream, p0, step0, out):
    """Normals for paths ``p0..p0+n-1`` and steps ``step0..step0+m-1``."""
    for i in range(out.shape[0]):
        row = out[i]
        _fill(k0, k1, stream, p0 + i, step0, row)


@njit(**JIT)
def _fill(k0, k1, stream, path, step0, row):
    buf = np.empty(4)
    blk = -1
    for j in range(row.shape[0]):
        s = step0 + j
        bb = s >> 2
        if bb != blk:
            normal_block(k0, k1, stream, path, bb, buf)
            blk = bb
        row[j] = buf[s & 3]
