"""Compiled multi-step march for the 1D finite-difference scheme.

Mirrors ``fd1d._step`` operation for operation; ``fd1d`` keeps the numpy
version as the readable reference and the tests hold the two together.
"""
import numba
import numpy as np

OK, BLOWUP, JUMP, DIVISION, CLOG = 0, 1, 2, 3, 4


@numba.njit(cache=True)
def _B(s, a, c):
    if s < a:
        return 0.0
    if s > 1.0:
        return (2.0 / 3.0) * c * (1.0 - a)
    return (2.0 / 3.0) * c * (((1.0 - s) / (1.0 - a)) ** 2 * (3.0 * a - 1.0 - 2.0 * s) + (1.0 - a))


@numba.njit(cache=True)
def march(theta, ci, cs, n, dx, dt, nsteps, drying, onesided, prm, floor):
    """Advance in place; returns (status, steps_done).

    ``prm`` = (n0, c, a, D, theta_bar, ci_bar, gamma, Ks, Kw, c_bar, Kbar).
    """
    n0, c, a, D, theta_bar, ci_bar, gamma, Ks, Kw, c_bar, Kbar = (
        prm[0], prm[1], prm[2], prm[3], prm[4], prm[5], prm[6], prm[7], prm[8], prm[9], prm[10],
    )
    N = theta.shape[0] - 1
    B = np.empty(N + 1)
    r = np.empty(N + 1)
    V = np.empty(N + 1)
    rate = np.empty(N + 1)
    th_new = np.empty(N + 1)
    ci_new = np.empty(N + 1)
    h2 = 2.0 * dx * dx
    for k in range(nsteps):
        for j in range(N + 1):
            if not n[j] > 0.0:
                return CLOG, k
            B[j] = _B(theta[j] / n[j], a, c)
            r[j] = (n[j] / n0) ** 2
            rate[j] = Ks * ci[j] * (n[j] - theta[j]) ** 2 + Kbar * max(ci[j] - c_bar, 0.0) * theta[j]
        V[0] = (B[1] - B[0]) * r[0] / dx if onesided else 0.0
        for j in range(1, N):
            V[j] = (B[j + 1] - B[j - 1]) * r[j] / (2.0 * dx)
        V[N] = (B[N] - B[N - 1]) * r[N] / dx
        jump = 0.0
        for j in range(1, N):
            dlt = ((r[j] + r[j + 1]) * (B[j + 1] - B[j]) - (r[j - 1] + r[j]) * (B[j] - B[j - 1])) / h2
            th_new[j] = theta[j] + dt * dlt
            jump = max(jump, abs(th_new[j] - theta[j]))
            if th_new[j] <= floor:
                return DIVISION, k
        for j in range(1, N):
            d_lo = D * theta[j - 1]
            d_md = D * theta[j]
            d_hi = D * theta[j + 1]
            diff = ((d_md + d_hi) * (ci[j + 1] - ci[j]) - (d_lo + d_md) * (ci[j] - ci[j - 1])) / h2
            numer = (
                theta[j] * ci[j]
                + dt / (2.0 * dx) * (abs(V[j + 1]) * ci[j + 1] - 2.0 * abs(V[j]) * ci[j] + abs(V[j - 1]) * ci[j - 1])
                + dt * diff
                + dt / (2.0 * dx) * (V[j + 1] * ci[j + 1] - V[j - 1] * ci[j - 1])
                - dt * rate[j]
            )
            ci_new[j] = numer / th_new[j]
        if drying:
            th_new[0] = 0.0
            th_new[N] = 0.0
            ci_new[0] = (4.0 * ci_new[1] - ci_new[2]) / 3.0
        else:
            th_new[0] = n0
            th_new[N] = (4.0 * th_new[N - 1] - th_new[N - 2] + 2.0 * dx * Kw * theta_bar) / (3.0 + 2.0 * dx * Kw)
            ci_new[0] = ci_bar
        ci_new[N] = (4.0 * ci_new[N - 1] - ci_new[N - 2]) / 3.0
        for j in range(N + 1):
            cs[j] = cs[j] + dt * rate[j]
            n[j] = n0 - gamma * cs[j]
            theta[j] = th_new[j]
            ci[j] = ci_new[j]
            if not (np.isfinite(theta[j]) and np.isfinite(ci[j]) and np.isfinite(cs[j])):
                return BLOWUP, k + 1
            if not n[j] > 0.0:
                return CLOG, k + 1
        if jump > n0:
            return JUMP, k + 1
    return OK, nsteps
