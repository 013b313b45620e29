"""Compressed sparse row storage, assembly helpers and a Jacobi BiCGStab."""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import SolverError

DENSE_LIMIT = 200


class TripletBuffer:
    """Accumulates (row, col, value) contributions before compression."""

    def __init__(self, N: int):
        self.N = int(N)
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []

    def add(self, rows, cols, vals) -> None:
        rows, cols, vals = np.broadcast_arrays(
            np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64), np.asarray(vals, dtype=float)
        )
        for idx in (rows, cols):
            if idx.size and (idx.min() < 0 or idx.max() >= self.N):
                raise IndexError(f"triplet index out of range for dimension {self.N}")
        self._rows.append(rows.ravel())
        self._cols.append(cols.ravel())
        self._vals.append(vals.ravel())

    def arrays(self):
        if not self._rows:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, np.zeros(0)
        return np.concatenate(self._rows), np.concatenate(self._cols), np.concatenate(self._vals)

    def __len__(self):
        return sum(len(r) for r in self._rows)


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Square CSR matrix; column indices sorted and unique within each row."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    N: int

    @property
    def nnz(self) -> int:
        return len(self.data)

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.N), np.diff(self.indptr))

    def spmv(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.N,):
            raise ValueError(f"dimension mismatch: matrix is {self.N}x{self.N}, vector has shape {x.shape}")
        return np.bincount(self.row_ids(), weights=self.data * x[self.indices], minlength=self.N)

    def __matmul__(self, x):
        return self.spmv(x)

    def diagonal(self) -> np.ndarray:
        rows = self.row_ids()
        d = np.zeros(self.N)
        on = rows == self.indices
        d[rows[on]] = self.data[on]
        return d

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.N, self.N))
        np.add.at(out, (self.row_ids(), self.indices), self.data)
        return out

    def with_data(self, data: np.ndarray) -> "SparseMatrix":
        return SparseMatrix(self.indptr, self.indices, np.asarray(data, dtype=float), self.N)

    def __add__(self, other: "SparseMatrix") -> "SparseMatrix":
        if other.indptr is self.indptr and other.indices is self.indices:
            return self.with_data(self.data + other.data)
        buf = TripletBuffer(self.N)
        for m in (self, other):
            buf.add(m.row_ids(), m.indices, m.data)
        return compress(buf, self.N)

    def scaled(self, alpha: float) -> "SparseMatrix":
        return self.with_data(alpha * self.data)


def compress(buf: TripletBuffer, N: int | None = None) -> SparseMatrix:
    """Sum duplicates and lay out rows in ascending column order."""
    N = buf.N if N is None else int(N)
    rows, cols, vals = buf.arrays()
    if rows.size and (rows.max() >= N or cols.max() >= N):
        raise IndexError(f"triplet index out of range for dimension {N}")
    key = rows * N + cols
    uniq, inverse = np.unique(key, return_inverse=True)
    data = np.bincount(inverse.ravel(), weights=vals, minlength=len(uniq)) if len(uniq) else np.zeros(0)
    r, c = np.divmod(uniq, N)
    indptr = np.zeros(N + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=N), out=indptr[1:])
    return SparseMatrix(indptr, c.astype(np.int64), data, N)


def identity(N: int) -> SparseMatrix:
    return SparseMatrix(np.arange(N + 1, dtype=np.int64), np.arange(N, dtype=np.int64), np.ones(N), N)


@dataclass(frozen=True, eq=False)
class ElementPattern:
    """Sparsity of a P1 operator plus the element-to-CSR scatter map.

    ``scatter[e, a, b]`` is the position in ``data`` that receives the local
    entry (a, b) of element e, so assembly is a single bincount.
    """

    indptr: np.ndarray
    indices: np.ndarray
    scatter: np.ndarray
    N: int
    diag: np.ndarray = field(repr=False)

    @classmethod
    def from_elements(cls, elements: np.ndarray, N: int) -> "ElementPattern":
        k = elements.shape[1]
        rows = np.repeat(elements, k, axis=1).ravel()
        cols = np.tile(elements, (1, k)).ravel()
        key = rows * N + cols
        uniq, inverse = np.unique(key, return_inverse=True)
        r, c = np.divmod(uniq, N)
        indptr = np.zeros(N + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=N), out=indptr[1:])
        diag = np.flatnonzero(r == c)
        if len(diag) != N:
            raise ValueError("every node must belong to at least one element")
        return cls(indptr, c.astype(np.int64), inverse.reshape(len(elements), k, k), N, diag)

    def assemble(self, local: np.ndarray) -> SparseMatrix:
        data = np.bincount(self.scatter.ravel(), weights=np.asarray(local).ravel(), minlength=len(self.indices))
        return SparseMatrix(self.indptr, self.indices, data, self.N)

    def from_diagonal(self, d: np.ndarray) -> SparseMatrix:
        data = np.zeros(len(self.indices))
        data[self.diag] = d
        return SparseMatrix(self.indptr, self.indices, data, self.N)


def apply_dirichlet(A: SparseMatrix, b: np.ndarray, nodes, values) -> tuple[SparseMatrix, np.ndarray]:
    """Replace the rows of ``nodes`` by identity rows and set b to ``values``.

    Columns are left untouched, so the system stays nonsymmetric but the
    sparsity pattern is unchanged.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    data = A.data.copy()
    b = np.array(b, dtype=float)
    if nodes.size == 0:
        return A.with_data(data), b
    rows = A.row_ids()
    hit = np.zeros(A.N, dtype=bool)
    hit[nodes] = True
    sel = hit[rows]
    data[sel] = 0.0
    on = sel & (rows == A.indices)
    if np.count_nonzero(on) != len(np.unique(nodes)):
        raise ValueError("constrained row has no diagonal entry in the sparsity pattern")
    data[on] = 1.0
    b[nodes] = np.broadcast_to(np.asarray(values, dtype=float), nodes.shape)
    return A.with_data(data), b


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    converged: bool


@numba.njit(cache=True)
def _spmv(indptr, indices, data, x, out):
    for i in range(len(indptr) - 1):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        out[i] = acc


@numba.njit(cache=True)
def _bicgstab(indptr, indices, data, b, x, dinv, tol, maxit):
    N = len(b)
    r = np.empty(N)
    _spmv(indptr, indices, data, x, r)
    for i in range(N):
        r[i] = b[i] - r[i]
    bnorm = np.sqrt(np.dot(b, b))
    rhat = r.copy()
    p = np.zeros(N)
    v = np.zeros(N)
    y = np.empty(N)
    z = np.empty(N)
    s = np.empty(N)
    t = np.empty(N)
    rho = 1.0
    alpha = 1.0
    omega = 1.0
    if np.sqrt(np.dot(r, r)) <= tol * bnorm:
        return 0, 0
    for it in range(1, maxit + 1):
        rho_new = np.dot(rhat, r)
        if rho_new == 0.0:
            return it, 1
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        for i in range(N):
            p[i] = r[i] + beta * (p[i] - omega * v[i])
            y[i] = dinv[i] * p[i]
        _spmv(indptr, indices, data, y, v)
        denom = np.dot(rhat, v)
        if denom == 0.0:
            return it, 1
        alpha = rho / denom
        for i in range(N):
            s[i] = r[i] - alpha * v[i]
            x[i] += alpha * y[i]
        if np.sqrt(np.dot(s, s)) <= tol * bnorm:
            return it, 0
        for i in range(N):
            z[i] = dinv[i] * s[i]
        _spmv(indptr, indices, data, z, t)
        tt = np.dot(t, t)
        if tt == 0.0:
            return it, 1
        omega = np.dot(t, s) / tt
        for i in range(N):
            x[i] += omega * z[i]
            r[i] = s[i] - omega * t[i]
        if np.sqrt(np.dot(r, r)) <= tol * bnorm:
            return it, 0
        if omega == 0.0:
            return it, 1
    return maxit, 2


def solve_bicgstab(
    A: SparseMatrix, b: np.ndarray, tol: float = 1e-10, maxit: int | None = None, x0: np.ndarray | None = None
) -> tuple[np.ndarray, SolveReport]:
    """Jacobi-preconditioned BiCGStab. The report is always returned; the
    caller decides what to do with a non-converged solve."""
    b = np.asarray(b, dtype=float)
    if b.shape != (A.N,):
        raise ValueError(f"dimension mismatch: matrix is {A.N}x{A.N}, rhs has shape {b.shape}")
    maxit = 10 * A.N if maxit is None else int(maxit)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(A.N), SolveReport(0, 0.0, True)
    d = A.diagonal()
    if np.any(d == 0.0):
        raise SolverError("zero on the diagonal; Jacobi preconditioner undefined", None)
    x = np.zeros(A.N) if x0 is None else np.array(x0, dtype=float)
    total = 0
    # a restart from the current iterate recovers from breakdowns and from
    # drift between the recursive and the true residual
    for _ in range(3):
        its, _status = _bicgstab(A.indptr, A.indices, A.data, b, x, 1.0 / d, tol, maxit - total)
        total += its
        res = float(np.linalg.norm(b - A.spmv(x))) / bnorm
        if res <= tol or total >= maxit:
            break
    return x, SolveReport(total, res, res <= tol)


def solve_dense(A: SparseMatrix, b: np.ndarray) -> np.ndarray:
    """Dense LU reference solve, limited to small systems."""
    if A.N > DENSE_LIMIT:
        raise ValueError(f"dense solve limited to N <= {DENSE_LIMIT}, got {A.N}")
    return np.linalg.solve(A.to_dense(), np.asarray(b, dtype=float))
