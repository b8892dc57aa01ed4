"""Compiled objective and Nelder-Mead kernels for the minimum-distance fits.

Block kinds are integer-coded (see ``KIND_CODES``); ``mode`` selects the
moment: 0 for Haar wavelet variance at filter widths ``x``, 1 for the
autocovariance at lags ``x``.  Formulas mirror :mod:`latentid.moments`.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .models import BlockKind

KIND_CODES = {BlockKind.WN: 0, BlockKind.QN: 1, BlockKind.DRIFT: 2, BlockKind.RW: 3,
              BlockKind.MA1: 4, BlockKind.AR1: 5}

BIG = 1e300


@njit(cache=True, nogil=True, error_model="numpy")
def model_moments(theta, kinds, offsets, x, mode, out):
    for i in range(x.shape[0]):
        out[i] = 0.0
    for b in range(kinds.shape[0]):
        k = kinds[b]
        o = offsets[b]
        for i in range(x.shape[0]):
            t = x[i]
            if mode == 0:
                if k == 0:
                    v = theta[o] / t
                elif k == 1:
                    v = 6.0 * theta[o] / (t * t)
                elif k == 2:
                    v = theta[o] * theta[o] * t * t / 16.0
                elif k == 3:
                    v = theta[o] * (t * t + 2.0) / (12.0 * t)
                elif k == 4:
                    r = theta[o]
                    v = theta[o + 1] * ((1.0 + r) ** 2 * t - 6.0 * r) / (t * t)
                else:
                    r = theta[o]
                    m = t / 2.0
                    num = m * (1.0 - r * r) - 3.0 * r + 4.0 * r ** (m + 1.0) - r ** (t + 1.0)
                    v = 2.0 * theta[o + 1] * num / (t * t * (1.0 - r) ** 2 * (1.0 - r * r))
            else:
                h = abs(t)
                if k == 0:
                    v = theta[o] if h == 0 else 0.0
                elif k == 1:
                    v = 2.0 * theta[o] if h == 0 else (-theta[o] if h == 1 else 0.0)
                elif k == 4:
                    r = theta[o]
                    v = (1.0 + r * r) * theta[o + 1] if h == 0 else (r * theta[o + 1] if h == 1 else 0.0)
                elif k == 5:
                    r = theta[o]
                    v = r ** h * theta[o + 1] / (1.0 - r * r)
                else:
                    v = math.nan
            out[i] += v


@njit(cache=True, nogil=True, error_model="numpy")
def objective(u, kinds, offsets, pos, x, mode, target, W, diag, work, theta):
    for i in range(u.shape[0]):
        theta[i] = math.exp(u[i]) if pos[i] else math.tanh(u[i])
    model_moments(theta, kinds, offsets, x, mode, work)
    for i in range(work.shape[0]):
        work[i] = target[i] - work[i]
    val = 0.0
    if diag:
        for i in range(work.shape[0]):
            val += W[i, i] * work[i] * work[i]
    else:
        for i in range(work.shape[0]):
            for j in range(work.shape[0]):
                val += work[i] * W[i, j] * work[j]
    if not math.isfinite(val):
        return BIG
    return val


@njit(cache=True, nogil=True, error_model="numpy")
def _sort_simplex(sim, fsim):
    order = np.argsort(fsim, kind="mergesort")
    return sim[order].copy(), fsim[order].copy()


@njit(cache=True, nogil=True, error_model="numpy")
def nelder_mead(u0, step, maxiter, xatol, adaptive, kinds, offsets, pos, x, mode, target, W, diag):
    """Nelder-Mead from the simplex ``u0, u0 + step * e_k``.

    Stops when every vertex lies within ``xatol`` (max-norm) of the best
    vertex, or after ``maxiter`` iterations.  Returns ``(u, f, iterations)``.
    """
    n = u0.shape[0]
    if adaptive:
        rho, chi, psi, sigma = 1.0, 1.0 + 2.0 / n, 0.75 - 1.0 / (2.0 * n), 1.0 - 1.0 / n
    else:
        rho, chi, psi, sigma = 1.0, 2.0, 0.5, 0.5
    work = np.empty(x.shape[0])
    theta = np.empty(n)
    sim = np.empty((n + 1, n))
    fsim = np.empty(n + 1)
    sim[0] = u0
    for k in range(n):
        sim[k + 1] = u0
        sim[k + 1, k] += step
    for k in range(n + 1):
        fsim[k] = objective(sim[k], kinds, offsets, pos, x, mode, target, W, diag, work, theta)
    sim, fsim = _sort_simplex(sim, fsim)
    it = 0
    while it < maxiter:
        spread = 0.0
        for k in range(1, n + 1):
            for i in range(n):
                d = abs(sim[k, i] - sim[0, i])
                if d > spread:
                    spread = d
        if spread <= xatol:
            break
        xbar = np.zeros(n)
        for k in range(n):
            xbar += sim[k]
        xbar /= n
        xr = (1.0 + rho) * xbar - rho * sim[n]
        fxr = objective(xr, kinds, offsets, pos, x, mode, target, W, diag, work, theta)
        shrink = False
        if fxr < fsim[0]:
            xe = (1.0 + rho * chi) * xbar - rho * chi * sim[n]
            fxe = objective(xe, kinds, offsets, pos, x, mode, target, W, diag, work, theta)
            if fxe < fxr:
                sim[n] = xe
                fsim[n] = fxe
            else:
                sim[n] = xr
                fsim[n] = fxr
        elif fxr < fsim[n - 1]:
            sim[n] = xr
            fsim[n] = fxr
        elif fxr < fsim[n]:
            xc = (1.0 + psi * rho) * xbar - psi * rho * sim[n]
            fxc = objective(xc, kinds, offsets, pos, x, mode, target, W, diag, work, theta)
            if fxc <= fxr:
                sim[n] = xc
                fsim[n] = fxc
            else:
                shrink = True
        else:
            xcc = (1.0 - psi) * xbar + psi * sim[n]
            fxcc = objective(xcc, kinds, offsets, pos, x, mode, target, W, diag, work, theta)
            if fxcc < fsim[n]:
                sim[n] = xcc
                fsim[n] = fxcc
            else:
                shrink = True
        if shrink:
            for k in range(1, n + 1):
                sim[k] = sim[0] + sigma * (sim[k] - sim[0])
                fsim[k] = objective(sim[k], kinds, offsets, pos, x, mode, target, W, diag, work, theta)
        sim, fsim = _sort_simplex(sim, fsim)
        it += 1
    return sim[0].copy(), fsim[0], it
