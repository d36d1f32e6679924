"""Compiled inner loops for the coordinate-wise M-step solvers.

Array layout: predictors are passed transposed with a leading row of ones,
``X1T`` of shape (p+1, n); responsibilities as ``tauT`` (K, n); gate scores as
``S`` (K-1, n). Gate parameters ``W`` are (K-1, p+1) with the intercept in
column 0.

Status words returned by the coordinate routines are bit sets of the
``ST_*`` flags below.
"""
import numpy as np
from numba import njit

CA_KIND = 0
MM_KIND = 1

EXP_CLAMP = 700.0
NR_MAX_NEWTON = 50
NR_MAX_ITERS = 300

ST_BISECT = 1
ST_FAIL = 2
ST_CLAMP = 4


@njit(cache=True)
def soft_threshold(u, t):
    if u > t:
        return u - t
    if u < -t:
        return u + t
    return 0.0


@njit(cache=True)
def _logaddexp(a, b):
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@njit(cache=True)
def log1p_sum_exp_except(S, k, i):
    """log(1 + sum_{l != k} exp(S[l, i])), stable."""
    m = 0.0
    for l in range(S.shape[0]):
        if l != k and S[l, i] > m:
            m = S[l, i]
    acc = np.exp(-m)
    for l in range(S.shape[0]):
        if l != k:
            acc += np.exp(S[l, i] - m)
    return m + np.log(acc)


@njit(cache=True)
def gate_log_normalizer(S):
    """log(1 + sum_l exp(S[l, i])) per column i."""
    n = S.shape[1]
    out = np.empty(n)
    for i in range(n):
        out[i] = log1p_sum_exp_except(S, -1, i)
    return out


@njit(cache=True)
def _ghv(kind, w, wref, a, base, lo, x, pis, rho, scale):
    """Gradient, second derivative and value of one smooth coordinate piece.

    kind CA: exact gate objective restricted to one coordinate
        a*w - sum_i log(exp(lo_i) + exp(base_i + x_i (w - wref))) - rho/2 w^2
    kind MM: separable minorizer restricted to one coordinate
        a*w - sum_i pis_i/scale * exp(scale x_i (w - wref)) - rho/2 w^2
    """
    g = a - rho * w
    h = -rho
    v = a * w - 0.5 * rho * w * w
    clamped = False
    d = w - wref
    n = x.shape[0]
    if kind == CA_KIND:
        for i in range(n):
            t = base[i] + x[i] * d
            lc = _logaddexp(lo[i], t)
            pi = np.exp(t - lc)
            g -= x[i] * pi
            h -= x[i] * x[i] * pi * (1.0 - pi)
            v -= lc
    else:
        for i in range(n):
            if x[i] == 0.0:
                v -= pis[i] / scale
                continue
            arg = scale * x[i] * d
            if arg > EXP_CLAMP:
                arg = EXP_CLAMP
                clamped = True
            elif arg < -EXP_CLAMP:
                arg = -EXP_CLAMP
                clamped = True
            e = pis[i] * np.exp(arg)
            g -= x[i] * e
            h -= scale * x[i] * x[i] * e
            v -= e / scale
    return g, h, v, clamped


@njit(cache=True)
def _solve_piece(kind, sgn, gamma, lower, u0, wref, a, base, lo, x, pis, rho, scale):
    """Root of phi(u) = sgn * grad(sgn * u) - gamma, a decreasing function of u.

    ``lower`` is the left end of the feasible half-line (0.0 for a signed piece,
    -inf for an unconstrained coordinate). Safeguarded Newton with a bracket
    discovered on the fly; bisection once the bracket is closed and Newton
    misbehaves or exceeds its iteration budget.
    """
    status = 0
    lo_b = lower
    hi_b = np.inf
    u = u0
    for it in range(NR_MAX_ITERS):
        g, h, _, cl = _ghv(kind, sgn * u, wref, a, base, lo, x, pis, rho, scale)
        if cl:
            status |= ST_CLAMP
        phi = sgn * g - gamma
        if phi > 0.0:
            lo_b = u
        elif phi < 0.0:
            hi_b = u
        else:
            return u, status
        step_cap = max(1.0, abs(u))
        if h < 0.0 and it < NR_MAX_NEWTON:
            un = u - phi / h
        elif phi > 0.0:
            un = u + step_cap
        else:
            un = u - step_cap
        if un - u > step_cap:
            un = u + step_cap
        elif u - un > step_cap:
            un = u - step_cap
        if not (un > lo_b and un < hi_b):
            if np.isfinite(lo_b) and np.isfinite(hi_b):
                un = 0.5 * (lo_b + hi_b)
                status |= ST_BISECT
            elif np.isfinite(hi_b):
                un = max(lo_b, hi_b - step_cap) if np.isfinite(lo_b) else hi_b - step_cap
            else:
                un = lo_b + step_cap
        if abs(un - u) <= 1e-13 * (1.0 + abs(u)):
            return un, status
        if np.isfinite(lo_b) and np.isfinite(hi_b) and hi_b - lo_b <= 1e-14 * (1.0 + abs(u)):
            return 0.5 * (lo_b + hi_b), status
        u = un
    if np.isfinite(lo_b) and np.isfinite(hi_b):
        return 0.5 * (lo_b + hi_b), status | ST_BISECT
    return u0, status | ST_FAIL


@njit(cache=True)
def coord_max(kind, wcur, gamma, penalized, wref, a, base, lo, x, pis, rho, scale):
    """Maximize piece(w) - gamma*|w| over one coordinate; returns (w, status).

    Solves the smooth piece on the side where it can rise above the value at
    zero, discards sign-infeasible maximizers, compares with w = 0 and never
    returns a point worse than ``wcur``.
    """
    status = 0
    if not penalized:
        cand, st = _solve_piece(kind, 1.0, 0.0, -np.inf, wcur, wref, a, base, lo, x, pis, rho, scale)
        status |= st
        _, _, v_c, _ = _ghv(kind, cand, wref, a, base, lo, x, pis, rho, scale)
        _, _, v_w, _ = _ghv(kind, wcur, wref, a, base, lo, x, pis, rho, scale)
        if v_w > v_c + 1e-14 * (1.0 + abs(v_c)):
            return wcur, status
        return cand, status

    g0, _, v0, cl = _ghv(kind, 0.0, wref, a, base, lo, x, pis, rho, scale)
    if cl:
        status |= ST_CLAMP
    cand = 0.0
    tot_c = v0
    if g0 > gamma or g0 < -gamma:
        sgn = 1.0 if g0 > gamma else -1.0
        u0 = sgn * wcur if sgn * wcur > 0.0 else 0.0
        u, st = _solve_piece(kind, sgn, gamma, 0.0, u0, wref, a, base, lo, x, pis, rho, scale)
        status |= st
        if u > 0.0 and (st & ST_FAIL) == 0:
            w = sgn * u
            _, _, v_p, _ = _ghv(kind, w, wref, a, base, lo, x, pis, rho, scale)
            tot_p = v_p - gamma * u
            if tot_p > v0:
                cand = w
                tot_c = tot_p
    if wcur != cand:
        _, _, v_w, _ = _ghv(kind, wcur, wref, a, base, lo, x, pis, rho, scale)
        tot_w = v_w - gamma * abs(wcur)
        if tot_w > tot_c + 1e-14 * (1.0 + abs(tot_c)):
            return wcur, status
    return cand, status


@njit(cache=True)
def ca_sweeps(X1T, tauT, W, S, gamma, rho, sweeps, tol):
    """Cyclic coordinate ascent on the exact gate objective; W and S updated in place.

    Returns (sweeps run, coordinate failures, bisection fallbacks).
    """
    K1, n = S.shape
    P1 = X1T.shape[0]
    lo = np.empty(n)
    empty = np.empty(0)
    n_fail = 0
    n_bis = 0
    done = 0
    for sweep in range(sweeps):
        maxd = 0.0
        for k in range(K1):
            for i in range(n):
                lo[i] = log1p_sum_exp_except(S, k, i)
            for j in range(P1):
                x = X1T[j]
                a = 0.0
                for i in range(n):
                    a += tauT[k, i] * x[i]
                pen = j > 0
                wold = W[k, j]
                wnew, st = coord_max(CA_KIND, wold, gamma[k] if pen else 0.0, pen, wold, a,
                                     S[k], lo, x, empty, rho if pen else 0.0, 1.0)
                if st & ST_FAIL:
                    n_fail += 1
                if st & ST_BISECT:
                    n_bis += 1
                d = wnew - wold
                if d != 0.0:
                    for i in range(n):
                        S[k, i] += x[i] * d
                    W[k, j] = wnew
                    if abs(d) > maxd:
                        maxd = abs(d)
        done += 1
        if maxd <= tol:
            break
    return done, n_fail, n_bis


@njit(cache=True)
def mm_state(S):
    """Gate probabilities pi_k(x_i; w_s) of the non-reference classes, (K-1, n)."""
    K1, n = S.shape
    logc = gate_log_normalizer(S)
    pis = np.empty((K1, n))
    for k in range(K1):
        for i in range(n):
            pis[k, i] = np.exp(S[k, i] - logc[i])
    return pis


@njit(cache=True)
def mm_sweep(X1T, tauT, W, S, gamma, rho):
    """One MM sweep: maximize the separable minorizer built at W.

    Returns (new W, skipped intercepts, coordinate failures, clamp events).
    """
    K1, n = S.shape
    P1 = X1T.shape[0]
    scale = float(P1)
    pis = mm_state(S)
    Wn = W.copy()
    empty = np.empty(0)
    n_skip = 0
    n_fail = 0
    n_clamp = 0
    for k in range(K1):
        st_mass = 0.0
        sp_mass = 0.0
        for i in range(n):
            st_mass += tauT[k, i]
            sp_mass += pis[k, i]
        if st_mass > 0.0 and sp_mass > 0.0:
            Wn[k, 0] = W[k, 0] + np.log(st_mass / sp_mass) / scale
        else:
            n_skip += 1
        for j in range(1, P1):
            x = X1T[j]
            a = 0.0
            for i in range(n):
                a += tauT[k, i] * x[i]
            wnew, st = coord_max(MM_KIND, W[k, j], gamma[k], True, W[k, j], a,
                                 empty, empty, x, pis[k], rho, scale)
            if st & ST_FAIL:
                n_fail += 1
            if st & ST_CLAMP:
                n_clamp += 1
            Wn[k, j] = wnew
    return Wn, n_skip, n_fail, n_clamp


@njit(cache=True)
def pn_working(S, tauT, wfloor):
    """Per-class working weights and residuals z - s of the diagonal quadratic model."""
    K1, n = S.shape
    pis = mm_state(S)
    omega = np.empty((K1, n))
    R = np.empty((K1, n))
    for k in range(K1):
        for i in range(n):
            om = pis[k, i] * (1.0 - pis[k, i])
            if om < wfloor:
                om = wfloor
            omega[k, i] = om
            R[k, i] = (tauT[k, i] - pis[k, i]) / om
    return omega, R


@njit(cache=True)
def pn_sweeps(X1T, omega, R, W, gamma, rho, sweeps, tol):
    """Closed-form coordinate ascent on the penalized quadratic model.

    ``R`` holds working residuals z - s(W) and is updated in place.
    Returns (candidate W, skipped coordinates).
    """
    K1, n = R.shape
    P1 = X1T.shape[0]
    Wc = W.copy()
    n_skip = 0
    for sweep in range(sweeps):
        maxd = 0.0
        for k in range(K1):
            for j in range(P1):
                x = X1T[j]
                wold = Wc[k, j]
                num = 0.0
                den = 0.0
                for i in range(n):
                    wx = omega[k, i] * x[i]
                    num += wx * (R[k, i] + x[i] * wold)
                    den += wx * x[i]
                if j > 0:
                    den += rho
                if den <= 0.0:
                    n_skip += 1
                    continue
                if j > 0:
                    wnew = soft_threshold(num, gamma[k]) / den
                else:
                    wnew = num / den
                d = wnew - wold
                if d != 0.0:
                    for i in range(n):
                        R[k, i] -= x[i] * d
                    Wc[k, j] = wnew
                    if abs(d) > maxd:
                        maxd = abs(d)
        if maxd <= tol:
            break
    return Wc, n_skip


@njit(cache=True)
def expert_cd(XT, y, tauT, B, sig2, lam, sweeps, tol):
    """Weighted-Lasso coordinate descent for every expert; B (K, p+1) updated in place.

    Threshold for component k is lam[k] * sig2[k]. Returns (skipped
    coordinates, components with zero responsibility mass).
    """
    K = B.shape[0]
    p, n = XT.shape
    r = np.empty(n)
    n_skip = 0
    n_empty = 0
    for k in range(K):
        tk = tauT[k]
        mass = 0.0
        for i in range(n):
            mass += tk[i]
        if mass <= 0.0:
            n_empty += 1
            continue
        for i in range(n):
            acc = y[i] - B[k, 0]
            for j in range(p):
                acc -= XT[j, i] * B[k, j + 1]
            r[i] = acc
        den = np.zeros(p)
        for j in range(p):
            for i in range(n):
                den[j] += tk[i] * XT[j, i] * XT[j, i]
        thr = lam[k] * sig2[k]
        for sweep in range(sweeps):
            maxd = 0.0
            for j in range(p):
                if den[j] <= 0.0:
                    n_skip += 1
                    continue
                x = XT[j]
                bold = B[k, j + 1]
                num = 0.0
                for i in range(n):
                    num += tk[i] * x[i] * (r[i] + x[i] * bold)
                bnew = soft_threshold(num, thr) / den[j]
                d = bnew - bold
                if d != 0.0:
                    for i in range(n):
                        r[i] -= x[i] * d
                    B[k, j + 1] = bnew
                    if abs(d) > maxd:
                        maxd = abs(d)
            s = 0.0
            for i in range(n):
                s += tk[i] * r[i]
            d0 = s / mass
            if d0 != 0.0:
                B[k, 0] += d0
                for i in range(n):
                    r[i] -= d0
                if abs(d0) > maxd:
                    maxd = abs(d0)
            if maxd <= tol:
                break
    return n_skip, n_empty
