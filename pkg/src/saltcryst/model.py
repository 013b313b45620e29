"""Physical constants, nodal state and the pointwise constitutive laws.

Everything here is shared by the finite-difference and finite-element
engines. Functions accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import DegeneratePorosityError, DomainError, PoreCloggingError


@dataclass(frozen=True)
class SaturationLaw:
    """Piecewise-cubic capillary law B(s) with threshold ``a`` and scale ``c``."""

    a: float
    c: float

    def __post_init__(self):
        if not 0.0 < self.a < 1.0:
            raise ValueError(f"saturation threshold a must lie in (0, 1), got {self.a}")
        if not self.c > 0.0:
            raise ValueError(f"scale c must be positive, got {self.c}")


@dataclass(frozen=True)
class PhysicalParameters:
    """Material and exchange constants (units: cm, s, g).

    Defaults are the brick values used throughout the reference experiments.
    Instances are immutable; use :meth:`replace` for perturbed copies.
    """

    n0: float = 2.8510e-1  # initial porosity, dimensionless
    c: float = 9.8073e-4  # matrix property, cm^2/s
    a: float = 2.1904e-1  # minimum saturation for hydraulic continuity
    D: float = 1.2300e-5  # ion diffusivity, cm^2/s
    theta_bar: float = 6.2540e-2  # ambient moisture content (treated as a fraction)
    ci_bar: float = 9.9500e-2  # Na2SO4 concentration in supplied water, g/cm^3
    gamma: float = 6.0000e-1  # specific crystal volume, cm^3/g
    Ks: float = 4.1000e-5  # crystallization rate, 1/s
    Kw: float = 1.5e-2  # top-boundary exchange coefficient, cm/s
    c_bar: float = 0.4399  # saturated ion concentration, g/cm^3
    Kbar: float = 1.0000e-4  # hydrated-crystal growth rate, 1/s

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (np.isfinite(value) and value > 0.0):
                raise ValueError(f"parameter {f.name} must be finite and positive, got {value}")
        if not self.a < 1.0:
            raise ValueError(f"a must be < 1, got {self.a}")
        if not self.n0 < 1.0:
            raise ValueError(f"n0 must be < 1, got {self.n0}")

    @property
    def law(self) -> SaturationLaw:
        return SaturationLaw(self.a, self.c)

    def replace(self, **changes) -> "PhysicalParameters":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


FIELD_NAMES = ("theta", "ci", "cs", "n")


@dataclass
class State:
    """The four nodal fields at one time level."""

    theta: np.ndarray
    ci: np.ndarray
    cs: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, name), dtype=float) for name in FIELD_NAMES]
        sizes = {a.shape for a in arrays}
        if len(sizes) != 1 or arrays[0].ndim != 1:
            raise ValueError(f"state fields must be 1-D arrays of equal length, got shapes {sizes}")
        for name, arr in zip(FIELD_NAMES, arrays):
            setattr(self, name, arr)

    def __len__(self):
        return self.theta.shape[0]

    def copy(self) -> "State":
        return State(self.theta.copy(), self.ci.copy(), self.cs.copy(), self.n.copy())

    def as_array(self) -> np.ndarray:
        """Fields stacked as rows (theta, ci, cs, n)."""
        return np.vstack([self.theta, self.ci, self.cs, self.n])

    def porosity_defect(self, p: PhysicalParameters) -> float:
        """max |n - (n0 - gamma cs)|; zero for every accepted state."""
        return float(np.max(np.abs(self.n - (p.n0 - p.gamma * self.cs))))


def _check_finite(s):
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise DomainError("saturation argument must be finite")
    return s


def _out(value, *like):
    # scalars in, scalar out
    return float(value) if all(np.ndim(x) == 0 for x in like) else value


def eval_B(s, law: SaturationLaw):
    """Capillary potential B(s) in cm^2/s; 0 below ``a``, constant above 1."""
    s_arr = _check_finite(s)
    a, c = law.a, law.c
    mid = (2.0 / 3.0) * c * (((1.0 - s_arr) / (1.0 - a)) ** 2 * (3.0 * a - 1.0 - 2.0 * s_arr) + (1.0 - a))
    top = (2.0 / 3.0) * c * (1.0 - a)
    out = np.where(s_arr < a, 0.0, np.where(s_arr > 1.0, top, mid))
    return _out(out, s)


def eval_B_prime(s, law: SaturationLaw):
    """Derivative of :func:`eval_B`; nonnegative, peaks at c for s = (1+a)/2."""
    s_arr = _check_finite(s)
    a, c = law.a, law.c
    mid = 4.0 * c * (1.0 - s_arr) * (s_arr - a) / (1.0 - a) ** 2
    out = np.where((s_arr < a) | (s_arr > 1.0), 0.0, mid)
    return _out(out, s)


def _check_porosity(n):
    n_arr = np.asarray(n, dtype=float)
    if np.any(~(n_arr > 0.0)):
        raise DegeneratePorosityError("porosity must be strictly positive")
    return n_arr


def mobility_f(theta, n, p: PhysicalParameters):
    """Scalar diffusion coefficient (n / n0^2) B'(theta / n)."""
    n_arr = _check_porosity(n)
    theta_arr = np.asarray(theta, dtype=float)
    out = n_arr / p.n0**2 * eval_B_prime(theta_arr / n_arr, p.law)
    return _out(out, theta, n)


def drift_F_coefficient(theta, n, grad_n, p: PhysicalParameters):
    """Drift vector (1 / n0^2) B'(theta / n) grad n.

    ``grad_n`` has the spatial dimension as its last axis; ``theta`` and ``n``
    broadcast against the remaining axes.
    """
    n_arr = _check_porosity(n)
    scale = eval_B_prime(np.asarray(theta, dtype=float) / n_arr, p.law) / p.n0**2
    return np.asarray(scale)[..., None] * np.asarray(grad_n, dtype=float)


def crystallization_rate(ci, theta, n, p: PhysicalParameters):
    """Rate of crystal deposition, g/cm^3/s."""
    ci_arr = np.asarray(ci, dtype=float)
    theta_arr = np.asarray(theta, dtype=float)
    n_arr = np.asarray(n, dtype=float)
    out = p.Ks * ci_arr * (n_arr - theta_arr) ** 2 + p.Kbar * np.maximum(ci_arr - p.c_bar, 0.0) * theta_arr
    return _out(out, ci, theta, n)


def porosity_from_cs(cs, p: PhysicalParameters):
    """n = n0 - gamma cs; raises once crystals fill the pores."""
    cs_arr = np.asarray(cs, dtype=float)
    n = p.n0 - p.gamma * cs_arr
    if np.any(~(n > 0.0)):
        bad = int(np.argmin(n)) if n.ndim else 0
        raise PoreCloggingError(
            f"porosity reached {float(np.min(n)):.6g} <= 0 (node {bad}); crystal content exceeds n0/gamma"
        )
    return _out(n, cs)


def imbibition_initial_state(bottom_mask: np.ndarray, p: PhysicalParameters) -> State:
    """Saturated, salty bottom; ambient moisture and no ions elsewhere."""
    bottom = np.asarray(bottom_mask, dtype=bool)
    theta = np.where(bottom, p.n0, p.theta_bar)
    ci = np.where(bottom, p.ci_bar, 0.0)
    cs = np.zeros(bottom.shape)
    return State(theta, ci, cs, np.full(bottom.shape, p.n0))
