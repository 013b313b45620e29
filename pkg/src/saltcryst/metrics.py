"""Quadrature rules and the scalar diagnostics built on them."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .fd1d import Grid1D
from .mesh import Mesh, restrict_nodes
from .model import State

log = logging.getLogger(__name__)

# endpoint corrections of the fourth-order rule, frozen after checking the
# moment conditions (see tests/test_metrics.py)
GREGORY4_END = (Fraction(3, 8), Fraction(7, 6), Fraction(23, 24))


def gregory_weights(m: int, dx: float, order: int = 4) -> np.ndarray:
    """Weights for ``m`` equally spaced samples; ``order`` is 2 or 4."""
    if order not in (2, 4):
        raise ValueError(f"Gregory order must be 2 or 4, got {order}")
    if m < 2:
        raise ValueError(f"need at least 2 samples, got {m}")
    if order == 4 and m < 7:
        log.info("Gregory order 4 needs >= 7 samples (got %d); using order 2", m)
        order = 2
    w = np.ones(m)
    if order == 2:
        w[[0, -1]] = 0.5
    else:
        end = np.array([float(f) for f in GREGORY4_END])
        w[:3] = end
        w[-3:] = end[::-1]
    return w * dx


def gregory_integrate(samples, dx: float, order: int = 4) -> float:
    y = np.asarray(samples, dtype=float)
    return float(gregory_weights(len(y), dx, order) @ y)


def _uniform_spacing(geometry) -> float | None:
    if isinstance(geometry, Grid1D):
        return geometry.dx
    if isinstance(geometry, Mesh) and geometry.dim == 1:
        x = geometry.nodes[:, 0]
        d = np.diff(x)
        if np.all(d > 0) and np.allclose(d, d[0], rtol=1e-12, atol=0):
            return float(d[0])
    return None


def _extent(geometry) -> float:
    if isinstance(geometry, Grid1D):
        return geometry.H
    return geometry.volume()


def integrate(values, geometry, order: int = 4) -> float:
    """Integral of a nodal field: Gregory on uniform 1D grids, P1 otherwise."""
    dx = _uniform_spacing(geometry)
    if dx is not None:
        return gregory_integrate(values, dx, order)
    from .fem.assembly import fem_space

    return float(fem_space(geometry).lumped @ np.asarray(values, dtype=float))


def average_porosity(state: State, geometry) -> float:
    return integrate(state.n, geometry) / _extent(geometry)


def average_crystal(state: State, geometry) -> float:
    return integrate(state.cs, geometry) / _extent(geometry)


def _restrict(v_ref, geometry, ref_geometry):
    v_ref = np.asarray(v_ref, dtype=float)
    if ref_geometry is None:
        return v_ref
    if isinstance(geometry, Mesh) and isinstance(ref_geometry, Mesh) and geometry.dim > 1:
        return v_ref[restrict_nodes(geometry, ref_geometry)]
    m = geometry.Nx + 1 if isinstance(geometry, Grid1D) else geometry.num_nodes
    M = len(v_ref)
    if (M - 1) % (m - 1):
        raise ValueError(f"grids are not nested: {M} reference nodes vs {m} nodes")
    return v_ref[:: (M - 1) // (m - 1)]


def l2_error(v, v_ref, geometry, ref_geometry=None) -> float:
    """L2 distance at the nodes of ``geometry``.

    A finer reference is restricted to the coarse nodes by sampling (nested
    grids). Uniform 1D grids use the fourth-order Gregory rule; other meshes
    use the P1 mass-matrix norm.
    """
    v = np.asarray(v, dtype=float)
    e = v - _restrict(v_ref, geometry, ref_geometry)
    if len(e) != len(v):
        raise ValueError("incompatible geometries")
    dx = _uniform_spacing(geometry)
    if dx is not None:
        return float(np.sqrt(max(gregory_integrate(e * e, dx, 4), 0.0)))
    from .fem.assembly import assemble_mass

    return float(np.sqrt(max(e @ assemble_mass(geometry).spmv(e), 0.0)))


@dataclass
class TotalsSeries:
    """Spatial totals of theta and c_s on a time grid."""

    t: np.ndarray
    total_theta: np.ndarray
    total_cs: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.total_theta = np.asarray(self.total_theta, dtype=float)
        self.total_cs = np.asarray(self.total_cs, dtype=float)
        if not (self.t.shape == self.total_theta.shape == self.total_cs.shape) or self.t.ndim != 1:
            raise ValueError("t, total_theta, total_cs must be 1-D arrays of equal length")


def totals_series(snapshots, geometry) -> TotalsSeries:
    """Totals of every snapshot, integrated with the second-order rule."""
    t = [s.time for s in snapshots]
    th = [integrate(s.state.theta, geometry, order=2) for s in snapshots]
    cs = [integrate(s.state.cs, geometry, order=2) for s in snapshots]
    return TotalsSeries(t, th, cs)


def _relative(run_total, ref_total, name):
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.abs(run_total - ref_total) / run_total
    bad = ~(run_total != 0) | ~np.isfinite(e)
    if np.any(bad):
        warnings.warn(f"{name}: {int(bad.sum())} sample(s) with zero run total excluded", RuntimeWarning, stacklevel=3)
        e = np.where(bad, np.nan, e)
    return e


def time_average(t: np.ndarray, e: np.ndarray) -> float:
    ok = np.isfinite(e)
    t, e = t[ok], e[ok]
    if len(t) == 0:
        return float("nan")
    if len(t) == 1:
        return float(e[0])
    T = t[-1] - t[0]
    dt = np.diff(t)
    if np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        return gregory_integrate(e, float(dt[0]), order=2) / T
    return float(np.trapezoid(e, t)) / T


def relative_errors(run: TotalsSeries, ref: TotalsSeries):
    """(e_theta(t), e_s(t), M_theta); each error is normalized by the run's total."""
    if run.t.shape != ref.t.shape or not np.allclose(run.t, ref.t, rtol=1e-12, atol=1e-9):
        raise ValueError("run and reference time grids are not aligned")
    e_theta = _relative(run.total_theta, ref.total_theta, "e_theta")
    e_s = _relative(run.total_cs, ref.total_cs, "e_s")
    return e_theta, e_s, time_average(run.t, e_theta)
