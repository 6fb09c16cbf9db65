"""Dense and sparse linear-algebra kernels shared by the rest of the package.

Sparse matrices are plain :class:`scipy.sparse.csr_matrix` objects kept in a
canonical form (sorted column indices, no duplicates, no stored zeros).
Dense helpers work on :class:`numpy.ndarray`.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "IndefiniteMatrixError",
    "Factorization",
    "NullBasisPair",
    "as_csr",
    "check_csr",
    "spmv",
    "sparse_product",
    "sparse_transpose",
    "to_dense",
    "factorize",
    "sym_eig",
    "null_basis",
    "moore_penrose",
    "write_matrix_market",
    "read_matrix_market",
]


class IndefiniteMatrixError(np.linalg.LinAlgError):
    """Raised when an SPD factorization meets a non-positive pivot."""

    def __init__(self, message, n_negative=None):
        super().__init__(message)
        self.n_negative = n_negative


def as_csr(A):
    """Return ``A`` as a canonical CSR matrix (float64, sorted, no zeros)."""
    if sp.issparse(A):
        out = sp.csr_matrix(A, dtype=float, copy=True)
    else:
        out = sp.csr_matrix(np.atleast_2d(np.asarray(A, dtype=float)))
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def check_csr(A):
    """Validate the CSR invariants; raise ``ValueError`` on the first violation."""
    n_rows, n_cols = A.shape
    ptr, idx = A.indptr, A.indices
    if len(ptr) != n_rows + 1 or ptr[0] != 0:
        raise ValueError("row offsets must have length n_rows+1 and start at 0")
    if np.any(np.diff(ptr) < 0):
        raise ValueError("row offsets must be non-decreasing")
    if idx.size and (idx.min() < 0 or idx.max() >= n_cols):
        raise ValueError("column index out of range")
    for i in range(n_rows):
        row = idx[ptr[i]:ptr[i + 1]]
        if np.any(np.diff(row) <= 0):
            raise ValueError(f"column indices of row {i} not strictly increasing")
    if np.any(A.data == 0.0):
        raise ValueError("explicit zeros stored")


def spmv(A, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (A.shape[1],):
        raise ValueError(f"dimension mismatch: matrix has {A.shape[1]} columns, vector has shape {x.shape}")
    return np.asarray(A @ x).ravel()


def sparse_product(A, B):
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} times {B.shape}")
    return as_csr(A @ B)


def sparse_transpose(A):
    return as_csr(A.T)


def to_dense(A):
    return A.toarray() if sp.issparse(A) else np.array(A, dtype=float)


class Factorization:
    """A sparse LU factorization with a symmetric-positive-definite check.

    For ``kind="spd"`` the matrix is factored with diagonal pivoting under a
    symmetric fill-reducing permutation, so the pivots are those of an
    LDL^T factorization and their signs give the inertia.  A non-positive
    pivot raises :class:`IndefiniteMatrixError`.
    """

    def __init__(self, A, kind="spd"):
        if kind not in ("spd", "indefinite"):
            raise ValueError(f"unknown factorization kind {kind!r}")
        A = sp.csc_matrix(A, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError("factorization needs a square matrix")
        self.kind = kind
        self.size = A.shape[0]
        self._lu = None
        if self.size == 0:
            return
        if kind == "spd":
            lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options=dict(SymmetricMode=True))
            pivots = lu.U.diagonal()
            symmetric_perm = np.array_equal(lu.perm_r, lu.perm_c)
            if not symmetric_perm or np.any(pivots <= 0.0):
                n_neg = int(np.sum(pivots <= 0.0)) if symmetric_perm else None
                raise IndefiniteMatrixError(
                    f"matrix is not positive definite ({n_neg} non-positive pivots)", n_neg)
        else:
            lu = spla.splu(A)
        self._lu = lu

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.size:
            raise ValueError(f"dimension mismatch: factor of size {self.size}, rhs {b.shape}")
        if self.size == 0:
            return b.copy()
        return self._lu.solve(b)


def factorize(A, kind="spd"):
    return Factorization(A, kind)


def _require_symmetric(A, name):
    scale = max(np.abs(A).max(initial=0.0), 1.0)
    if A.shape[0] != A.shape[1] or not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * scale):
        raise ValueError(f"{name} must be symmetric")


def sym_eig(A, H=None):
    """Eigenpairs of the symmetric pencil ``A v = lam H v`` in ascending order.

    ``H`` defaults to the identity and must be symmetric positive definite.
    """
    A = to_dense(A)
    _require_symmetric(A, "A")
    if H is None:
        return scipy.linalg.eigh(A)
    H = to_dense(H)
    _require_symmetric(H, "H")
    try:
        return scipy.linalg.eigh(A, H)
    except np.linalg.LinAlgError as exc:
        raise IndefiniteMatrixError(f"H is not positive definite: {exc}") from exc


@dataclass(frozen=True)
class NullBasisPair:
    """Orthonormal bases of the right and left null spaces of a matrix.

    ``right_basis`` has orthonormal columns spanning ker(A); ``left_basis``
    has orthonormal rows spanning the left null space {v : v A = 0}.
    """

    right_basis: np.ndarray
    left_basis: np.ndarray
    numerical_rank: int
    tolerance: float


def _svd(A):
    A = to_dense(A)
    if A.size == 0:
        m, n = A.shape
        return np.eye(m), np.zeros(0), np.eye(n)
    return np.linalg.svd(A, full_matrices=True)


def _rank(s, tol):
    if s.size == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def null_basis(A, tol=1e-10):
    """Right and left null-space bases via the SVD.

    Singular values below ``tol`` times the largest one count as zero.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    U, s, Vt = _svd(A)
    r = _rank(s, tol)
    return NullBasisPair(right_basis=Vt[r:].T.copy(), left_basis=U[:, r:].T.copy(),
                         numerical_rank=r, tolerance=tol)


def moore_penrose(A, tol=1e-10):
    """Moore-Penrose pseudoinverse from a truncated SVD."""
    A = to_dense(A)
    m, n = A.shape
    U, s, Vt = _svd(A)
    r = _rank(s, tol)
    if r == 0:
        return np.zeros((n, m))
    return (Vt[:r].T / s[:r]) @ U[:, :r].T


def write_matrix_market(A, target=None, comment=""):
    """Write ``A`` in MatrixMarket coordinate format.

    ``target`` may be a path or a binary file object; with ``None`` the text
    is returned.
    """
    A = sp.coo_matrix(A)
    if target is None:
        buf = io.BytesIO()
        scipy.io.mmwrite(buf, A, comment=comment, field="real", symmetry="general")
        return buf.getvalue().decode()
    scipy.io.mmwrite(target, A, comment=comment, field="real", symmetry="general")
    return None


def read_matrix_market(source):
    """Read a MatrixMarket file, path or text, back into canonical CSR."""
    if isinstance(source, str) and source.lstrip().startswith("%%MatrixMarket"):
        source = io.BytesIO(source.encode())
    return as_csr(scipy.io.mmread(source))
