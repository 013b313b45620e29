"""Structured simplicial meshes of the interval, strip and prism.

The vertical axis is always the last coordinate. The 2D strip is
[-L/2, L/2] x [0, H]; the prism is [-L/2, L/2]^2 x [0, H].
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, MeshError


class Boundary(enum.IntEnum):
    BOTTOM = 0
    TOP = 1
    LATERAL = 2


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming simplicial mesh with tagged boundary facets.

    ``elements`` are (E, d+1) node indices with positive orientation;
    ``facets`` are (F, d) node indices of boundary facets, ``facet_tags`` the
    matching :class:`Boundary` values and ``facet_elements`` the owning
    element of each facet.
    """

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    facet_elements: np.ndarray
    element_measures: np.ndarray
    facet_measures: np.ndarray
    H: float
    L: float | None = None

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def height(self) -> np.ndarray:
        return self.nodes[:, -1]

    def boundary_nodes(self, *tags: Boundary) -> np.ndarray:
        mask = np.isin(self.facet_tags, [int(t) for t in tags])
        return np.unique(self.facets[mask])

    def node_mask(self, *tags: Boundary) -> np.ndarray:
        mask = np.zeros(self.num_nodes, dtype=bool)
        mask[self.boundary_nodes(*tags)] = True
        return mask

    def volume(self) -> float:
        return float(self.element_measures.sum())


@dataclass(frozen=True)
class P1Basis:
    """Constant gradients of the barycentric basis, shape (E, d+1, d)."""

    gradients: np.ndarray


def _measures(nodes, elements):
    d = nodes.shape[1]
    X = nodes[elements]
    J = np.transpose(X[:, 1:, :] - X[:, :1, :], (0, 2, 1))
    det = np.linalg.det(J) if d > 1 else J[:, 0, 0]
    return det / math.factorial(d)


def _orient(nodes, elements):
    signed = _measures(nodes, elements)
    flip = signed < 0
    if np.any(flip):
        elements = elements.copy()
        elements[flip, 0], elements[flip, 1] = elements[flip, 1].copy(), elements[flip, 0].copy()
    return elements


def _facet_measure(nodes, facets):
    X = nodes[facets]
    k = facets.shape[1]
    if k == 1:
        return np.ones(len(facets))
    if k == 2:
        return np.linalg.norm(X[:, 1] - X[:, 0], axis=1)
    return 0.5 * np.linalg.norm(np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]), axis=1)


def _boundary_facets(elements):
    """Facets that belong to exactly one element, with that element's index."""
    k = elements.shape[1]
    local = [tuple(i for i in range(k) if i != skip) for skip in range(k)]
    faces = np.concatenate([elements[:, list(f)] for f in local])
    owner = np.tile(np.arange(len(elements)), k)
    key = np.sort(faces, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    once = counts[inverse] == 1
    if np.any(counts > 2):
        raise MeshError("non-manifold mesh: a facet is shared by more than two elements")
    return faces[once], owner[once], counts


def _tag(nodes, facets, H, tol):
    z = nodes[facets][..., -1]
    tags = np.full(len(facets), int(Boundary.LATERAL))
    tags[np.all(np.abs(z) <= tol, axis=1)] = int(Boundary.BOTTOM)
    tags[np.all(np.abs(z - H) <= tol, axis=1)] = int(Boundary.TOP)
    return tags


def _finish(dim, nodes, elements, H, L=None):
    elements = _orient(nodes, np.asarray(elements, dtype=np.int64))
    measures = _measures(nodes, elements)
    if np.any(measures <= 0):
        raise MeshError("degenerate element in constructed mesh")
    facets, owner, _ = _boundary_facets(elements)
    tol = 1e-12 * max(H, L or 0.0)
    order = np.lexsort(np.sort(facets, axis=1).T[::-1])
    facets, owner = facets[order], owner[order]
    return Mesh(
        dim=dim,
        nodes=nodes,
        elements=elements,
        facets=facets,
        facet_tags=_tag(nodes, facets, H, tol),
        facet_elements=owner,
        element_measures=measures,
        facet_measures=_facet_measure(nodes, facets),
        H=float(H),
        L=None if L is None else float(L),
    )


def _divisions(length, spacing, name):
    count = int(round(length / spacing))
    if count < 1 or abs(count * spacing - length) > 1e-9 * length:
        raise ConfigError(f"{name}: length {length} is not an integer multiple of spacing {spacing}")
    return count


def build_interval(H: float, Nx: int) -> Mesh:
    """Uniform segments on [0, H]."""
    if Nx < 1:
        raise MeshError(f"Nx must be >= 1, got {Nx}")
    nodes = (np.arange(Nx + 1) * (H / Nx))[:, None]
    nodes[-1, 0] = H
    elements = np.column_stack([np.arange(Nx), np.arange(1, Nx + 1)])
    return _finish(1, nodes, elements, H)


def build_strip(L: float, H: float, hx: float, hz: float, pattern: str = "diagonal") -> Mesh:
    """Structured triangulation of [-L/2, L/2] x [0, H].

    ``pattern="diagonal"`` splits every cell along its lower-left to
    upper-right diagonal (2 triangles per cell). ``pattern="crossed"`` adds a
    cell-centre node and 4 triangles per cell; every cell is then
    mirror-symmetric, so laterally uniform data stay laterally uniform.
    """
    nx = _divisions(L, hx, "strip width")
    nz = _divisions(H, hz, "strip height")
    xs = -L / 2 + np.arange(nx + 1) * hx
    xs[-1] = L / 2
    zs = np.arange(nz + 1) * hz
    zs[-1] = H
    X, Z = np.meshgrid(xs, zs)
    nodes = np.column_stack([X.ravel(), Z.ravel()])
    i, k = np.meshgrid(np.arange(nx), np.arange(nz))
    i, k = i.ravel(), k.ravel()
    p00 = k * (nx + 1) + i
    p10, p01, p11 = p00 + 1, p00 + nx + 1, p00 + nx + 2
    if pattern == "diagonal":
        elements = np.stack([np.column_stack([p00, p10, p11]), np.column_stack([p00, p11, p01])], axis=1)
        elements = elements.reshape(-1, 3)
    elif pattern == "crossed":
        centres = np.column_stack([(xs[i] + xs[i + 1]) / 2, (zs[k] + zs[k + 1]) / 2])
        m = len(nodes) + np.arange(len(p00))
        nodes = np.vstack([nodes, centres])
        elements = np.stack(
            [
                np.column_stack([p00, p10, m]),
                np.column_stack([p10, p11, m]),
                np.column_stack([p11, p01, m]),
                np.column_stack([p01, p00, m]),
            ],
            axis=1,
        ).reshape(-1, 3)
    else:
        raise ConfigError(f"unknown strip pattern {pattern!r} (expected 'diagonal' or 'crossed')")
    return _finish(2, nodes, elements, H, L)


# Kuhn split of the unit cube: one tetrahedron per axis permutation, all
# sharing the main diagonal (0,0,0)-(1,1,1).
_KUHN = []
for perm in itertools.permutations(range(3)):
    corner = np.zeros(3, dtype=int)
    path = [tuple(corner)]
    for axis in perm:
        corner = corner.copy()
        corner[axis] = 1
        path.append(tuple(corner))
    _KUHN.append(path)


def build_prism(L: float, H: float, h: float) -> Mesh:
    """Structured tetrahedral mesh of [-L/2, L/2]^2 x [0, H] (6 tets per cube)."""
    n = _divisions(L, h, "prism base")
    m = _divisions(H, h, "prism height")
    xs = -L / 2 + np.arange(n + 1) * h
    xs[-1] = L / 2
    zs = np.arange(m + 1) * h
    zs[-1] = H
    Zg, Yg, Xg = np.meshgrid(zs, xs, xs, indexing="ij")
    nodes = np.column_stack([Xg.ravel(), Yg.ravel(), Zg.ravel()])

    def index(ix, iy, iz):
        return (iz * (n + 1) + iy) * (n + 1) + ix

    iz, iy, ix = np.meshgrid(np.arange(m), np.arange(n), np.arange(n), indexing="ij")
    ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
    tets = []
    for path in _KUHN:
        tets.append(np.column_stack([index(ix + dx, iy + dy, iz + dz) for dx, dy, dz in path]))
    elements = np.stack(tets, axis=1).reshape(-1, 4)
    return _finish(3, nodes, elements, H, L)


def p1_gradients(mesh: Mesh) -> P1Basis:
    """Per-element gradients of the d+1 barycentric functions."""
    X = mesh.nodes[mesh.elements]
    J = np.transpose(X[:, 1:, :] - X[:, :1, :], (0, 2, 1))
    det = np.linalg.det(J)
    scale = np.max(np.abs(X - X[:, :1, :]), axis=(1, 2)) ** mesh.dim
    if np.any(np.abs(det) <= 1e-14 * scale):
        bad = int(np.argmin(np.abs(det) / scale))
        raise MeshError(f"degenerate element {bad}")
    Jinv = np.linalg.inv(J)
    # rows of J^{-1} are the gradients of lambda_1..lambda_d
    rest = Jinv
    first = -rest.sum(axis=1, keepdims=True)
    return P1Basis(np.concatenate([first, rest], axis=1))


def outward_normals(mesh: Mesh) -> np.ndarray:
    """Unit outward normal of every boundary facet, shape (F, d)."""
    d = mesh.dim
    X = mesh.nodes[mesh.facets]
    centroid = mesh.nodes[mesh.elements[mesh.facet_elements]].mean(axis=1)
    if d == 1:
        normal = np.ones((len(mesh.facets), 1))
    elif d == 2:
        t = X[:, 1] - X[:, 0]
        normal = np.column_stack([t[:, 1], -t[:, 0]])
    else:
        normal = np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0])
    normal = normal / np.linalg.norm(normal, axis=1, keepdims=True)
    inward = np.einsum("ij,ij->i", normal, centroid - X[:, 0]) > 0
    normal[inward] *= -1
    return normal


def restrict_nodes(coarse: Mesh, fine: Mesh, decimals: int = 9) -> np.ndarray:
    """Index into ``fine.nodes`` of every coarse node (nested meshes)."""
    scale = max(coarse.H, coarse.L or 0.0)
    key = lambda pts: [tuple(r) for r in np.round(pts / scale, decimals)]
    lookup = {k: i for i, k in enumerate(key(fine.nodes))}
    try:
        return np.array([lookup[k] for k in key(coarse.nodes)])
    except KeyError as exc:
        raise MeshError("meshes are not nested: a coarse node has no fine counterpart") from exc
