"""Compiled inner loops.

The objective kernels share the signature ``kernel(x, params) -> float`` so
they can be passed as first-class functions into :func:`advance`.
"""

import math

import numba as nb
import numpy as np

OK = 0
NONFINITE_OBJECTIVE = 1
NONFINITE_STATE = 2


@nb.njit(cache=True, nogil=True)
def rastrigin_kernel(x, params):
    b = params[0]
    s = 0.0
    for j in range(x.shape[0]):
        y = x[j] - b
        s += y * y - 10.0 * math.cos(2.0 * math.pi * y)
    return 10.0 + s / x.shape[0]


@nb.njit(cache=True, nogil=True)
def rosenbrock_kernel(x, params):
    s = 0.0
    for j in range(x.shape[0] - 1):
        a = x[j + 1] - x[j] * x[j]
        c = x[j] - 1.0
        s += 100.0 * a * a + c * c
    return s / x.shape[0]


@nb.njit(cache=True, nogil=True)
def quadratic_kernel(x, params):
    s = 0.0
    for j in range(x.shape[0]):
        y = x[j] - params[j]
        s += y * y
    return 1.0 + s


@nb.njit(cache=True, nogil=True)
def constant_kernel(x, params):
    return params[0]


@nb.njit(cache=True, nogil=True)
def smooth_heaviside(x, eps):
    z = x / eps
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@nb.njit(cache=True, nogil=True)
def advance(f, fparams, X, dW, S, beta, csig, gam, h, alpha,
            isotropic, heaviside_eps, pinned, use_pinned, best_x, best_f, fv, cons):
    """Apply ``dW.shape[0]`` Euler steps to ``X`` in place.

    ``dW`` is ``(C, N, d)`` or ``(C, 1, d)`` for a shared Wiener increment.
    ``S`` is ``(C, N, d)``: the summed jump sizes of each particle in each step.
    ``beta``, ``csig`` (already multiplied by the sqrt(2) factor) and ``gam``
    hold the coefficients frozen at the start of each step.

    Returns ``(status, step, particle, n_evals)``.  On a non-OK status ``step``
    is the offset within the chunk and ``X`` is left partially updated.
    """
    n, d = X.shape
    shared = dW.shape[1] == 1
    n_evals = 0
    new = np.empty(d)
    for k in range(dW.shape[0]):
        fcons = 0.0
        if use_pinned:
            for j in range(d):
                cons[j] = pinned[j]
        else:
            for i in range(n):
                fv[i] = f(X[i], fparams)
                if not math.isfinite(fv[i]):
                    return NONFINITE_OBJECTIVE, k, i, n_evals
            n_evals += n
            imin = 0
            for i in range(1, n):
                if fv[i] < fv[imin]:
                    imin = i
            fmin = fv[imin]
            if fmin < best_f[0]:
                best_f[0] = fmin
                for j in range(d):
                    best_x[j] = X[imin, j]
            for j in range(d):
                cons[j] = 0.0
            wsum = 0.0
            for i in range(n):
                w = math.exp(-alpha * (fv[i] - fmin))
                wsum += w
                for j in range(d):
                    cons[j] += w * (X[i, j] - X[imin, j])
            # anchored at the best particle: exact for coincident particles
            for j in range(d):
                cons[j] = X[imin, j] + cons[j] / wsum
        if heaviside_eps > 0.0:
            fcons = f(cons, fparams)
            n_evals += 1
        b = beta[k]
        cs = csig[k]
        g = gam[k]
        for i in range(n):
            iw = 0 if shared else i
            drift = -b * h
            if heaviside_eps > 0.0:
                fi = fv[i] if not use_pinned else f(X[i], fparams)
                drift = drift * smooth_heaviside(fi - fcons, heaviside_eps)
            norm = 0.0
            if isotropic:
                for j in range(d):
                    dj = X[i, j] - cons[j]
                    norm += dj * dj
                norm = math.sqrt(norm)
            for j in range(d):
                dj = X[i, j] - cons[j]
                if isotropic:
                    diff = (cs * norm) * dW[k, iw, j]
                else:
                    diff = (cs * dj) * dW[k, iw, j]
                new[j] = X[i, j] + (drift * dj + diff + (g * dj) * S[k, i, j])
                if not math.isfinite(new[j]):
                    return NONFINITE_STATE, k, i, n_evals
            # start-of-step freezing: the consensus was computed before any update
            for j in range(d):
                X[i, j] = new[j]
    return OK, dW.shape[0], -1, n_evals
