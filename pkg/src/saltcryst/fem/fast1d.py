"""Compiled P1 march for interval meshes.

Builds the same tridiagonal systems as ``stepper.theta_system`` and
``stepper.ci_system`` (same quadrature, same Dirichlet rows) and solves them
directly with the Thomas algorithm. Used for the long 1D convergence runs.
"""
from __future__ import annotations

import numba
import numpy as np

from ..errors import BlowUpError, PoreCloggingError, SolverError
from ..fd1d import Phase
from ..linalg import SolveReport
from ..mesh import Mesh
from ..model import State

OK, CLOG, PIVOT, NONFINITE = 0, 1, 2, 3


@numba.njit(cache=True)
def _Bp(s, a, c):
    if s < a or s > 1.0:
        return 0.0
    return 4.0 * c * (1.0 - s) * (s - a) / (1.0 - a) ** 2


@numba.njit(cache=True)
def _thomas(lo, di, up, rhs, out, cp, dp):
    # lo[i] couples row i to i-1, up[i] row i to i+1
    N = len(di)
    if di[0] == 0.0:
        return False
    cp[0] = up[0] / di[0]
    dp[0] = rhs[0] / di[0]
    for i in range(1, N):
        m = di[i] - lo[i] * cp[i - 1]
        if m == 0.0:
            return False
        cp[i] = up[i] / m if i < N - 1 else 0.0
        dp[i] = (rhs[i] - lo[i] * dp[i - 1]) / m
    out[N - 1] = dp[N - 1]
    for i in range(N - 2, -1, -1):
        out[i] = dp[i] - cp[i] * out[i + 1]
    return True


@numba.njit(cache=True)
def _coeffs(th, n, x, e, n0, a, c):
    h = x[e + 1] - x[e]
    thc = 0.5 * (th[e] + th[e + 1])
    nc = 0.5 * (n[e] + n[e + 1])
    bp = _Bp(thc / nc, a, c)
    f = nc / (n0 * n0) * bp
    F = bp / (n0 * n0) * ((n[e + 1] - n[e]) / h)
    return h, thc, f, F


@numba.njit(cache=True)
def march(th, ci, cs, n, x, dt, nsteps, drying, old_coeffs, consistent, prm, dry_eps):
    """Advance in place; returns (status, steps_done)."""
    n0, c, a, D, theta_bar, ci_bar, gamma, Ks, Kw, c_bar, Kbar = (
        prm[0], prm[1], prm[2], prm[3], prm[4], prm[5], prm[6], prm[7], prm[8], prm[9], prm[10],
    )
    M = len(th)
    N = M - 1
    lump = np.zeros(M)
    for e in range(N):
        h = x[e + 1] - x[e]
        lump[e] += 0.5 * h
        lump[e + 1] += 0.5 * h
    lo = np.empty(M)
    di = np.empty(M)
    up = np.empty(M)
    rhs = np.empty(M)
    cp = np.empty(M)
    dp = np.empty(M)
    thn = np.empty(M)
    csn = np.empty(M)
    nn = np.empty(M)
    cin = np.empty(M)
    for k in range(nsteps):
        for j in range(M):
            if not n[j] > 0.0:
                return CLOG, k
        # theta system, coefficients at the old level
        for j in range(M):
            lo[j] = 0.0
            up[j] = 0.0
            if consistent:
                di[j] = 0.0
                rhs[j] = 0.0
            else:
                di[j] = lump[j] / dt
                rhs[j] = lump[j] / dt * th[j]
        for e in range(N):
            h, thc, f, F = _coeffs(th, n, x, e, n0, a, c)
            if consistent:
                di[e] += h / 3.0 / dt
                up[e] += h / 6.0 / dt
                lo[e + 1] += h / 6.0 / dt
                di[e + 1] += h / 3.0 / dt
                rhs[e] += h * (2.0 * th[e] + th[e + 1]) / 6.0 / dt
                rhs[e + 1] += h * (th[e] + 2.0 * th[e + 1]) / 6.0 / dt
            di[e] += f / h + 0.5 * F
            up[e] += -f / h + 0.5 * F
            lo[e + 1] += -f / h - 0.5 * F
            di[e + 1] += f / h - 0.5 * F
            if e == 0:
                di[0] += -F
            if e == N - 1:
                di[N] += F
        if drying:
            lo[0] = 0.0
            di[0] = 1.0
            up[0] = 0.0
            rhs[0] = 0.0
            lo[N] = 0.0
            di[N] = 1.0
            up[N] = 0.0
            rhs[N] = 0.0
        else:
            fN = n[N] / (n0 * n0) * _Bp(th[N] / n[N], a, c)
            di[N] += fN * Kw
            rhs[N] += fN * Kw * theta_bar
            lo[0] = 0.0
            di[0] = 1.0
            up[0] = 0.0
            rhs[0] = n0
        if not _thomas(lo, di, up, rhs, thn, cp, dp):
            return PIVOT, k
        # pointwise crystal and porosity updates from the old level
        for j in range(M):
            rate = Ks * ci[j] * (n[j] - th[j]) ** 2 + Kbar * max(ci[j] - c_bar, 0.0) * th[j]
            csn[j] = cs[j] + dt * rate
            nn[j] = n0 - gamma * csn[j]
            if not nn[j] > 0.0:
                return CLOG, k + 1
        # c_i system, coefficients at the new level
        for j in range(M):
            lo[j] = 0.0
            up[j] = 0.0
            if consistent:
                di[j] = 0.0
                rhs[j] = 0.0
            else:
                di[j] = lump[j] * thn[j] / dt
                rhs[j] = lump[j] * (th[j] * ci[j] - (csn[j] - cs[j])) / dt
        for e in range(N):
            if consistent:
                h = x[e + 1] - x[e]
                # exact P1-weighted mass: diag h(3w_a + w_b)/12, off h(w_a + w_b)/12
                wa, wb = thn[e], thn[e + 1]
                di[e] += h * (3.0 * wa + wb) / 12.0 / dt
                up[e] += h * (wa + wb) / 12.0 / dt
                lo[e + 1] += h * (wa + wb) / 12.0 / dt
                di[e + 1] += h * (wa + 3.0 * wb) / 12.0 / dt
                wa, wb = th[e], th[e + 1]
                ca, cb = ci[e], ci[e + 1]
                da, db = csn[e] - cs[e], csn[e + 1] - cs[e + 1]
                rhs[e] += (h * ((3.0 * wa + wb) * ca + (wa + wb) * cb) / 12.0 - h * (2.0 * da + db) / 6.0) / dt
                rhs[e + 1] += (h * ((wa + wb) * ca + (wa + 3.0 * wb) * cb) / 12.0 - h * (da + 2.0 * db) / 6.0) / dt
            if old_coeffs:
                h, thc, f, F = _coeffs(th, n, x, e, n0, a, c)
                thc = 0.5 * (thn[e] + thn[e + 1])
            else:
                h, thc, f, F = _coeffs(thn, nn, x, e, n0, a, c)
            s = D * thc / h
            fg = f * (thn[e + 1] - thn[e]) / h
            w0 = fg - thn[e] * F
            w1 = fg - thn[e + 1] * F
            di[e] += s - 0.5 * w0
            up[e] += -s - 0.5 * w1
            lo[e + 1] += -s + 0.5 * w0
            di[e + 1] += s + 0.5 * w1
        if not drying:
            lo[0] = 0.0
            di[0] = 1.0
            up[0] = 0.0
            rhs[0] = ci_bar
        for j in range(M):
            pm = thn[j]
            if j > 0:
                pm = max(pm, thn[j - 1])
            if j < N:
                pm = max(pm, thn[j + 1])
            if pm <= dry_eps and (drying or j > 0):
                lo[j] = 0.0
                di[j] = 1.0
                up[j] = 0.0
                rhs[j] = ci[j]
            elif drying and thn[j] <= dry_eps:
                cnt = 0.0
                tot = 0.0
                if j > 0 and thn[j - 1] > dry_eps:
                    cnt += 1.0
                    tot += ci[j - 1]
                if j < N and thn[j + 1] > dry_eps:
                    cnt += 1.0
                    tot += ci[j + 1]
                lo[j] = 0.0
                di[j] = 1.0
                up[j] = 0.0
                rhs[j] = tot / cnt
        if not _thomas(lo, di, up, rhs, cin, cp, dp):
            return PIVOT, k
        for j in range(M):
            th[j] = thn[j]
            ci[j] = cin[j]
            cs[j] = csn[j]
            n[j] = nn[j]
            if not (np.isfinite(th[j]) and np.isfinite(ci[j])):
                return NONFINITE, k + 1
    return OK, nsteps


def march_1d(state: State, mesh: Mesh, cfg, nsteps: int, offset: int = 0) -> State:
    """Advance ``state`` by ``nsteps`` on an interval mesh; returns a new State."""
    from .stepper import DRY_EPS

    if mesh.dim != 1:
        raise ValueError("the compiled path handles interval meshes only")
    x = mesh.nodes[:, 0]
    if not np.all(np.diff(x) > 0):
        raise ValueError("interval mesh nodes must be sorted bottom to top")
    p = cfg.params
    prm = np.array([p.n0, p.c, p.a, p.D, p.theta_bar, p.ci_bar, p.gamma, p.Ks, p.Kw, p.c_bar, p.Kbar])
    s = state.copy()
    if nsteps <= 0:
        return s
    status, done = march(
        s.theta,
        s.ci,
        s.cs,
        s.n,
        x,
        cfg.dt,
        nsteps,
        cfg.phase is Phase.DRYING,
        cfg.ci_coefficients == "old",
        cfg.mass_rule == "consistent",
        prm,
        DRY_EPS,
    )
    step = offset + done
    if status == CLOG:
        raise PoreCloggingError(f"non-positive porosity at step {step}")
    if status == PIVOT:
        raise SolverError(f"zero pivot in tridiagonal solve at step {step + 1}", SolveReport(0, float("inf"), False))
    if status == NONFINITE:
        raise BlowUpError(f"non-finite values at step {step}", step=step)
    return s
