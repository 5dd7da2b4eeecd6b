"""Sparse/dense matrix conventions and the symmetric eigensolver.

Conventions used throughout the package:

* sparse matrices are ``scipy.sparse.csr_array`` with float64 data;
* dense matrices are C-contiguous ``numpy.ndarray`` (float64);
* data points are stored as *rows*, so a feature matrix is ``(n, d)``
  and a label matrix is ``(n, L)``.

The only non-trivial primitive here is :func:`top_eig`, which computes the
top-k eigenpairs of a symmetric operator given only its matrix-vector
product.  Everything downstream (notably the low-rank completion loop)
depends on it being robust for operators of the form
``low-rank + sparse`` without ever forming the dense matrix.
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, eigsh

from .errors import EigensolverError

# Below this dimension (or when k is within 2 of it) ARPACK brings no
# benefit; the operator is applied to the identity and handed to LAPACK.
_DENSE_DIM = 128

_V0_SEED = 0x5EEC5


def as_csr(A):
    """Coerce to a float64 csr_array with canonical (sorted, deduped) layout."""
    A = sp.csr_array(A, dtype=np.float64)
    A.sum_duplicates()
    A.sort_indices()
    return A


def validate_csr(A):
    """Check the structural invariants of a csr_array; raise ValueError if broken."""
    if not isinstance(A, sp.csr_array):
        raise ValueError(f"expected csr_array, got {type(A).__name__}")
    indptr, indices = A.indptr, A.indices
    if len(indptr) != A.shape[0] + 1:
        raise ValueError("indptr length does not match row count")
    if np.any(np.diff(indptr) < 0):
        raise ValueError("indptr must be monotone non-decreasing")
    if A.nnz and (indices.min() < 0 or indices.max() >= A.shape[1]):
        raise ValueError("column index out of range")
    for i in range(A.shape[0]):
        row = indices[indptr[i]:indptr[i + 1]]
        if row.size > 1 and np.any(np.diff(row) <= 0):
            raise ValueError(f"row {i}: column indices not strictly increasing")
    if not np.all(np.isfinite(A.data)):
        raise ValueError("matrix contains non-finite values")
    return A


def spmv(A, x):
    """Sparse matrix-vector product ``A @ x`` with explicit dimension checks."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.shape[1]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, x has length {x.shape}")
    return A @ x


class SymmetricOperator:
    """Matrix-free symmetric linear operator ``v -> M v``.

    ``matvec`` must be linear and symmetric to round-off.  The operator
    counts its applications (and an optional per-apply flop estimate) so
    callers can assert complexity bounds.
    """

    def __init__(self, dim, matvec, flops_per_apply=0):
        if dim < 1:
            raise ValueError("operator dimension must be >= 1")
        self.dim = dim
        self._matvec = matvec
        self.flops_per_apply = flops_per_apply
        self.apply_count = 0

    def apply(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.dim and v.shape[0] != self.dim:
            raise ValueError(f"dimension mismatch: operator dim {self.dim}, vector {v.shape}")
        self.apply_count += 1
        return self._matvec(v)

    def check_symmetry(self, rtol=1e-8, probes=3, seed=0):
        """Probe v'(Mw) == w'(Mv) on random vector pairs."""
        rng = np.random.default_rng(seed)
        for _ in range(probes):
            v = rng.standard_normal(self.dim)
            w = rng.standard_normal(self.dim)
            a = v @ self.apply(w)
            b = w @ self.apply(v)
            if abs(a - b) > rtol * max(1.0, abs(a), abs(b)):
                return False
        return True


def _dense_from_op(op):
    n = op.dim
    M = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        M[:, j] = op.apply(e)
        e[j] = 0.0
    return 0.5 * (M + M.T)


def top_eig(op, k, tol=1e-8, max_iter=300):
    """Top-k eigenpairs (largest algebraic) of a symmetric operator.

    Returns ``(U, lam)`` with ``U`` of shape ``(dim, r)``, ``r <= k``,
    columns orthonormal, and ``lam`` sorted descending.  Each returned
    pair satisfies ``|op(u) - lam*u| <= tol * max(1, |lam|)``.

    Uses implicitly restarted Lanczos (ARPACK) on the matvec; small
    operators fall back to a dense decomposition assembled from matvecs.

    Raises EigensolverError on non-convergence; callers may retry with a
    larger ``max_iter``.
    """
    n = op.dim
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")

    if n <= _DENSE_DIM or k >= n - 2:
        M = _dense_from_op(op)
        lam, U = np.linalg.eigh(M)
        order = np.argsort(-lam, kind="stable")[:k]
        return np.ascontiguousarray(U[:, order]), lam[order]

    shifted = LinearOperator((n, n), matvec=op.apply, dtype=np.float64)
    v0 = np.random.default_rng(_V0_SEED).standard_normal(n)
    try:
        lam, U = eigsh(shifted, k=k, which="LA", tol=tol, maxiter=max_iter, v0=v0)
    except ArpackNoConvergence as exc:
        raise EigensolverError(
            f"eigensolver did not converge within {max_iter} restarts "
            f"(dim={n}, k={k}); retry with a larger budget"
        ) from exc
    except ArpackError as exc:
        raise EigensolverError(f"eigensolver failure: {exc}") from exc

    order = np.argsort(-lam, kind="stable")
    lam, U = lam[order], np.ascontiguousarray(U[:, order])

    # ARPACK's stopping rule is |r| <= tol*|lam|; verify our slightly
    # different contract and fall back to machine precision if violated.
    if not _residuals_ok(op, U, lam, tol):
        lam, U = eigsh(shifted, k=k, which="LA", tol=0, maxiter=max_iter, v0=v0)
        order = np.argsort(-lam, kind="stable")
        lam, U = lam[order], np.ascontiguousarray(U[:, order])
        if not _residuals_ok(op, U, lam, tol):
            raise EigensolverError(
                f"eigenpair residuals exceed tol={tol} even at machine precision"
            )
    return U, lam


def _residuals_ok(op, U, lam, tol):
    for i in range(lam.shape[0]):
        r = op.apply(U[:, i]) - lam[i] * U[:, i]
        if np.linalg.norm(r) > tol * max(1.0, abs(lam[i])):
            return False
    return True
