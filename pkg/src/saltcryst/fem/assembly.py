"""P1 element matrices and their global assembly.

All per-mesh geometry (gradients, measures, the CSR scatter map, boundary
facet data) lives in :class:`FemSpace`, built once per mesh and cached.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np

from ..errors import DegeneratePorosityError
from ..linalg import ElementPattern, SparseMatrix
from ..mesh import Boundary, Mesh, outward_normals, p1_gradients
from ..model import PhysicalParameters, drift_F_coefficient, eval_B_prime

_SPACES: "weakref.WeakKeyDictionary[Mesh, FemSpace]" = weakref.WeakKeyDictionary()


@dataclass(frozen=True, eq=False)
class FemSpace:
    mesh: Mesh
    grads: np.ndarray  # (E, d+1, d)
    vol: np.ndarray  # (E,)
    pattern: ElementPattern
    lumped: np.ndarray  # nodal vertex-rule volumes
    K0: np.ndarray  # (E, d+1, d+1) unit-coefficient stiffness
    mass0: np.ndarray  # (E, d+1, d+1) exact unit-weight mass
    facet_weight: np.ndarray  # |facet| / d, one per boundary facet
    normals: np.ndarray  # (F, d)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def N(self) -> int:
        return self.mesh.num_nodes

    def centroid(self, u: np.ndarray) -> np.ndarray:
        return u[self.mesh.elements].mean(axis=1)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """Elementwise constant gradient of a P1 field, (E, d)."""
        return np.einsum("ea,ead->ed", u[self.mesh.elements], self.grads)

    def nodal_sum(self, per_facet_node: np.ndarray, facet_mask: np.ndarray) -> np.ndarray:
        """Scatter a per-facet value to each of its nodes and sum."""
        nodes = self.mesh.facets[facet_mask]
        vals = np.repeat(per_facet_node[facet_mask][:, None], nodes.shape[1], axis=1)
        return np.bincount(nodes.ravel(), weights=vals.ravel(), minlength=self.N)


def fem_space(mesh: Mesh) -> FemSpace:
    space = _SPACES.get(mesh)
    if space is None:
        basis = p1_gradients(mesh)
        G = basis.gradients
        vol = mesh.element_measures
        k = mesh.dim + 1
        lumped = np.bincount(
            mesh.elements.ravel(), weights=np.repeat(vol / k, k), minlength=mesh.num_nodes
        )
        space = FemSpace(
            mesh=mesh,
            grads=G,
            vol=vol,
            pattern=ElementPattern.from_elements(mesh.elements, mesh.num_nodes),
            lumped=lumped,
            K0=vol[:, None, None] * np.einsum("ead,ebd->eab", G, G),
            mass0=_exact_mass_local(mesh.dim, np.ones((len(vol), k)), vol),
            facet_weight=mesh.facet_measures / mesh.dim,
            normals=outward_normals(mesh),
        )
        _SPACES[mesh] = space
    return space


def _exact_mass_local(d: int, w_local: np.ndarray, vol: np.ndarray) -> np.ndarray:
    # integral of phi_a phi_b phi_c over a simplex = |e| d! alpha! / (d+3)!,
    # so off-diagonal entries carry sum(w) + w_a + w_b and diagonal ones
    # 2 sum(w) + 4 w_a
    k = d + 1
    scale = vol * math.factorial(d) / math.factorial(d + 3)
    total = w_local.sum(axis=1)
    M = (total[:, None, None] + w_local[:, :, None] + w_local[:, None, :]) * np.ones((1, k, k))
    M[:, np.arange(k), np.arange(k)] += total[:, None] + 2.0 * w_local
    return scale[:, None, None] * M


def weighted_mass_local(space: FemSpace, w_local: np.ndarray) -> np.ndarray:
    """Exact local mass matrices for a P1 weight given per element vertex."""
    return _exact_mass_local(space.dim, w_local, space.vol)


def assemble_mass(mesh: Mesh, weight=1.0, rule: str = "exact") -> SparseMatrix:
    """Weighted P1 mass matrix, weight interpolated as a P1 field.

    ``rule="exact"`` integrates the cubic integrand exactly; ``"vertex"``
    uses the (d+1)-point vertex rule and yields a diagonal (lumped) matrix.
    """
    space = fem_space(mesh)
    w = np.broadcast_to(np.asarray(weight, dtype=float), (space.N,))
    if np.any(w < 0):
        raise ValueError("mass weight must be nonnegative")
    if rule == "vertex":
        return space.pattern.from_diagonal(lumped_mass(space, w))
    if rule != "exact":
        raise ValueError(f"unknown quadrature rule {rule!r}")
    local = _exact_mass_local(mesh.dim, w[mesh.elements], space.vol)
    return space.pattern.assemble(local)


def lumped_mass(space: FemSpace, weight=1.0) -> np.ndarray:
    """Diagonal of the vertex-rule mass matrix."""
    return space.lumped * np.broadcast_to(np.asarray(weight, dtype=float), (space.N,))


def assemble_stiffness(mesh: Mesh, coeff) -> SparseMatrix:
    """P1 stiffness with an elementwise constant coefficient."""
    space = fem_space(mesh)
    coeff = np.broadcast_to(np.asarray(coeff, dtype=float), (mesh.num_elements,))
    if np.any(coeff < 0):
        raise ValueError("stiffness coefficient must be nonnegative")
    return space.pattern.assemble(coeff[:, None, None] * space.K0)


def robin_terms(space: FemSpace, f_nodal: np.ndarray, Kw: float, theta_bar: float):
    """Diagonal and load of the top exchange term (vertex rule on Top facets)."""
    top = space.mesh.facet_tags == int(Boundary.TOP)
    diag = space.nodal_sum(space.facet_weight, top) * f_nodal * Kw
    return diag, diag * theta_bar


def assemble_robin(mesh: Mesh, f_old, Kw: float, theta_bar: float) -> tuple[SparseMatrix, np.ndarray]:
    """Top-boundary exchange contribution (matrix, rhs)."""
    space = fem_space(mesh)
    if not np.any(mesh.facet_tags == int(Boundary.TOP)):
        raise ValueError("mesh has no Top facets")
    f = np.broadcast_to(np.asarray(f_old, dtype=float), (space.N,))
    diag, rhs = robin_terms(space, f, Kw, theta_bar)
    return space.pattern.from_diagonal(diag), rhs


def element_coefficients(space: FemSpace, theta: np.ndarray, n: np.ndarray, p: PhysicalParameters):
    """Elementwise mobility f_e and drift F_e from centroid values."""
    th = space.centroid(theta)
    nb = space.centroid(n)
    if np.any(~(nb > 0)):
        raise DegeneratePorosityError("porosity must be strictly positive")
    bp = eval_B_prime(th / nb, p.law)
    f = nb / p.n0**2 * bp
    F = drift_F_coefficient(th, nb, space.gradient(n), p)
    return f, F


def drift_local(space: FemSpace, F: np.ndarray) -> np.ndarray:
    """Local matrices of (F theta, grad v) with F constant per element.

    Entry (a, b) is |e|/(d+1) F_e . grad phi_a: the trial function only
    enters through its integral.
    """
    k = space.dim + 1
    Fg = np.einsum("ed,ead->ea", F, space.grads)
    return (space.vol / k)[:, None, None] * np.repeat(Fg[:, :, None], k, axis=2)


def drift_boundary_diag(space: FemSpace, F: np.ndarray) -> np.ndarray:
    """Vertex-rule boundary term (theta F.nu, v) on the two bases.

    Lateral facets are left out: there the whole water flux
    (f grad theta - F theta).nu vanishes, so the term cancels.
    """
    owner = space.mesh.facet_elements
    Fn = np.einsum("fd,fd->f", F[owner], space.normals)
    bases = space.mesh.facet_tags != int(Boundary.LATERAL)
    return space.nodal_sum(space.facet_weight * Fn, bases)


def assemble_drift(mesh: Mesh, F: np.ndarray, include_boundary: bool = True) -> SparseMatrix:
    """Matrix C with C theta = -(F theta, grad v) + (theta F.nu, v) on the bases.

    This is the weak form of div(F theta) after integration by parts, valid
    for a discontinuous elementwise constant F.
    """
    space = fem_space(mesh)
    F = np.asarray(F, dtype=float)
    A = space.pattern.assemble(-drift_local(space, F))
    if include_boundary:
        A.data[space.pattern.diag] += drift_boundary_diag(space, F)
    return A


def advection_local(space: FemSpace, f: np.ndarray, F: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Local matrices of (c (f grad theta - F theta), grad v).

    The integrand is linear in c and theta jointly; it is integrated with the
    vertex rule, so entry (a, b) is |e|/(d+1) (f_e grad theta_e - theta_b F_e) . grad phi_a.
    """
    k = space.dim + 1
    gt = space.gradient(theta)
    fg = np.einsum("ed,ead->ea", f[:, None] * gt, space.grads)  # (E, a)
    Fg = np.einsum("ed,ead->ea", F, space.grads)  # (E, a)
    th = theta[space.mesh.elements]  # (E, b)
    return (space.vol / k)[:, None, None] * (fg[:, :, None] - Fg[:, :, None] * th[:, None, :])


def assemble_advection(mesh: Mesh, f: np.ndarray, F: np.ndarray, theta: np.ndarray) -> SparseMatrix:
    space = fem_space(mesh)
    return space.pattern.assemble(advection_local(space, np.asarray(f, float), np.asarray(F, float), theta))
