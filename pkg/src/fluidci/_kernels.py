"""Compiled inner loops: simplex-weight bisection and the accelerated
projected-gradient iteration for the precoding block.

Kept separate so the rest of the package stays plain numpy. All kernels
are deterministic IEEE double arithmetic (no fastmath), so repeated runs
produce bit-identical iterates.
"""

from __future__ import annotations

import numpy as np
from numba import njit

SANDWICH_RTOL = 1e-9

# Termination flags shared with the python layer.
FLAG_CONVERGED = 0
FLAG_ITERATION_CAP = 1
FLAG_SANDWICH_VIOLATION = -1


@njit(cache=True)
def simplex_weights(c, mu):
    """Maximizer of sum(lam*c - mu/2 lam^2) over the probability simplex.

    Solves for the multiplier ``gamma`` with ``sum(max((c+gamma)/mu, 0)) = 1``
    by bisection on the bracket [-max(c)-mu, -min(c)+mu]; once the bracket
    contains no breakpoint of the piecewise-linear sum the root is taken in
    closed form on that segment. Returns ``(lam, gamma)``.
    """
    n = c.shape[0]
    cmin = c[0]
    cmax = c[0]
    for i in range(1, n):
        if c[i] < cmin:
            cmin = c[i]
        if c[i] > cmax:
            cmax = c[i]
    lo = -cmax - mu
    hi = -cmin + mu
    gamma = 0.5 * (lo + hi)
    for _ in range(200):
        m_lo = 0
        m_hi = 0
        sum_hi = 0.0
        for i in range(n):
            if c[i] + lo > 0.0:
                m_lo += 1
            if c[i] + hi > 0.0:
                m_hi += 1
                sum_hi += c[i]
        if m_lo == m_hi and m_lo > 0:
            # No breakpoint inside the bracket: the sum is linear here.
            gamma = (mu - sum_hi) / m_lo
            break
        mid = 0.5 * (lo + hi)
        s_mid = 0.0
        for i in range(n):
            d = c[i] + mid
            if d > 0.0:
                s_mid += d
        s_mid = s_mid / mu - 1.0
        if abs(s_mid) <= 1e-10:
            gamma = mid
            break
        if s_mid < 0.0:
            lo = mid
        else:
            hi = mid
        gamma = 0.5 * (lo + hi)
    lam = np.empty(n)
    for i in range(n):
        v = (c[i] + gamma) / mu
        lam[i] = v if v > 0.0 else 0.0
    return lam, gamma


@njit(cache=True)
def candidate_matrix(gains, wavenumbers, conj_symbols, z, xbar, cot):
    """Candidate column responses computed straight from the channel model.

    Equivalent to building the lifted column geometry at ``z`` and taking
    inner products with the lifted precoders, but without materializing
    the columns: for each user/slot the complex receive product is formed
    and mapped to its two half-plane responses. Shapes: gains (K,),
    wavenumbers (K,), conj_symbols (K, T), z (N,), xbar (T, 2N); returns
    (T, 2K).
    """
    k_users = gains.shape[0]
    t_len = conj_symbols.shape[1]
    n = z.shape[0]
    out = np.empty((t_len, 2 * k_users))
    h_row = np.empty(n, dtype=np.complex128)
    for i in range(k_users):
        for m in range(n):
            h_row[m] = gains[i] * np.exp(-1j * wavenumbers[i] * z[m])
        for t in range(t_len):
            acc_re = 0.0
            acc_im = 0.0
            for m in range(n):
                prod = h_row[m] * (xbar[t, m] + 1j * xbar[t, n + m])
                acc_re += prod.real
                acc_im += prod.imag
            g = conj_symbols[i, t] * (acc_re + 1j * acc_im)
            out[t, 2 * i] = -g.real + cot * g.imag
            out[t, 2 * i + 1] = -g.real - cot * g.imag
    return out


@njit(cache=True)
def psi_at_point(gains, wavenumbers, conj_symbols, z, xbar, cot, mu):
    """Smoothed objective at one (precoder, positions) point.

    Combines the candidate responses, the simplex weights and the
    penalized value in a single pass. Returns ``(psi, lam, gamma, ok)``
    where ``ok`` reports the sandwich range check.
    """
    c = candidate_matrix(gains, wavenumbers, conj_symbols, z, xbar, cot)
    cflat = c.ravel()
    lam, gamma = simplex_weights(cflat, mu)
    psi = 0.0
    for i in range(cflat.shape[0]):
        psi += lam[i] * cflat[i] - 0.5 * mu * lam[i] * lam[i]
    ok = _sandwich_ok(psi, cflat, mu)
    return psi, lam, gamma, ok


@njit(cache=True)
def _candidate_products(columns, x, out):
    """out[t, j] = columns[t, :, j] . x[t, :]."""
    t_len, two_n, two_k = columns.shape
    for t in range(t_len):
        for j in range(two_k):
            acc = 0.0
            for m in range(two_n):
                acc += columns[t, m, j] * x[t, m]
            out[t, j] = acc


@njit(cache=True)
def _psi_from_c(cflat, mu):
    lam, gamma = simplex_weights(cflat, mu)
    val = 0.0
    for i in range(cflat.shape[0]):
        val += lam[i] * cflat[i] - 0.5 * mu * lam[i] * lam[i]
    return val, lam, gamma


@njit(cache=True)
def _sandwich_ok(psi, cflat, mu):
    cmax = cflat[0]
    for i in range(1, cflat.shape[0]):
        if cflat[i] > cmax:
            cmax = cflat[i]
    tol = SANDWICH_RTOL * max(1.0, abs(cmax), mu)
    return (psi <= cmax + tol) and (psi >= cmax - 0.5 * mu - tol)


@njit(cache=True)
def apg_precoding_loop(columns, x0, step_sizes, power, mu, eps, max_iters, momentum, restart):
    """Accelerated projected gradient on the smoothed objective, all slots at once.

    ``columns`` is (T, 2N, 2K), ``x0`` the (T, 2N) start, ``step_sizes`` the
    per-slot inverse Lipschitz constants. The momentum weights follow the
    usual tau recursion; with ``restart`` the momentum resets whenever the
    objective value increases. Returns the final iterate, the number of
    iterations, a termination flag and the objective trace (entry 0 is the
    value at the start point).
    """
    t_len, two_n, two_k = columns.shape
    n_all = t_len * two_k

    x = x0.copy()
    x_prev = x0.copy()
    y = np.empty_like(x)
    x_next = np.empty_like(x)

    c_x = np.empty(n_all)
    c_prev = np.empty(n_all)
    c_y = np.empty(n_all)
    c_next = np.empty(n_all)

    cmat = np.empty((t_len, two_k))
    _candidate_products(columns, x, cmat)
    k = 0
    for t in range(t_len):
        for j in range(two_k):
            c_x[k] = cmat[t, j]
            k += 1
    for i in range(n_all):
        c_prev[i] = c_x[i]

    psi_trace = np.empty(max_iters + 1)
    psi_prev, lam, gamma = _psi_from_c(c_x, mu)
    psi_trace[0] = psi_prev
    if not _sandwich_ok(psi_prev, c_x, mu):
        return x, 0, FLAG_SANDWICH_VIOLATION, psi_trace[:1]

    tau_prev = 1.0
    flag = FLAG_ITERATION_CAP
    iters = 0
    for it in range(1, max_iters + 1):
        iters = it
        tau = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tau_prev * tau_prev))
        s = (tau_prev - 1.0) / tau if momentum else 0.0

        for t in range(t_len):
            for m in range(two_n):
                y[t, m] = x[t, m] + s * (x[t, m] - x_prev[t, m])
        for i in range(n_all):
            c_y[i] = c_x[i] + s * (c_x[i] - c_prev[i])

        lam_y, gamma_y = simplex_weights(c_y, mu)

        movement = 0.0
        for t in range(t_len):
            base = t * two_k
            norm_sq = 0.0
            for m in range(two_n):
                g = 0.0
                for j in range(two_k):
                    g += columns[t, m, j] * lam_y[base + j]
                x_next[t, m] = y[t, m] - step_sizes[t] * g
                norm_sq += x_next[t, m] * x_next[t, m]
            if norm_sq > power:
                scale = np.sqrt(power / norm_sq)
                for m in range(two_n):
                    x_next[t, m] *= scale
            d = 0.0
            for m in range(two_n):
                diff = x_next[t, m] - x[t, m]
                d += diff * diff
            d = np.sqrt(d)
            if d > movement:
                movement = d

        _candidate_products(columns, x_next, cmat)
        k = 0
        for t in range(t_len):
            for j in range(two_k):
                c_next[k] = cmat[t, j]
                k += 1
        psi_val, lam_n, gamma_n = _psi_from_c(c_next, mu)
        if not _sandwich_ok(psi_val, c_next, mu):
            psi_trace[it] = psi_val
            return x_next, it, FLAG_SANDWICH_VIOLATION, psi_trace[: it + 1]
        psi_trace[it] = psi_val

        if restart and psi_val > psi_prev:
            tau = 1.0
            for t in range(t_len):
                for m in range(two_n):
                    x_prev[t, m] = x_next[t, m]
            for i in range(n_all):
                c_prev[i] = c_next[i]
        else:
            for t in range(t_len):
                for m in range(two_n):
                    x_prev[t, m] = x[t, m]
            for i in range(n_all):
                c_prev[i] = c_x[i]
        for t in range(t_len):
            for m in range(two_n):
                x[t, m] = x_next[t, m]
        for i in range(n_all):
            c_x[i] = c_next[i]
        tau_prev = tau
        psi_prev = psi_val

        if movement <= eps:
            flag = FLAG_CONVERGED
            break

    return x, iters, flag, psi_trace[: iters + 1]
