"""Neighbor selection on label vectors and exact kNN in embedding space.

``build_omega`` fixes, for every training point, the set of points whose
label inner products it must preserve (its own row of the observed index
set).  ``knn`` is the prediction-time search over embedding rows.  Both
are exact: clusters are capped to a few thousand points, so brute force
is cheaper and simpler than an approximate index.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

_BLOCK = 1024


@dataclass(frozen=True)
class OmegaSet:
    """Observed entries of the label Gram matrix, one row per point.

    ``indices[i]`` holds the ``m = min(n_bar, n)`` column indices observed
    for row ``i`` (ascending), and ``values[i]`` the exact label inner
    products at those positions.  Membership is row-wise: j appearing in
    row i does not imply i appears in row j.
    """

    n: int
    indices: np.ndarray  # (n, m) int32, ascending within each row
    values: np.ndarray   # (n, m) float64

    @property
    def row_width(self):
        return self.indices.shape[1]

    @property
    def nnz(self):
        return self.indices.size

    def gram_csr(self):
        """Observed Gram entries as an n x n csr_array."""
        return self.csr_with_values(self.values)

    def csr_with_values(self, vals):
        """CSR matrix over this index pattern with the given (n, m) values."""
        n, m = self.indices.shape
        indptr = np.arange(0, n * m + 1, m, dtype=np.int64)
        return sp.csr_array(
            (np.asarray(vals, dtype=np.float64).ravel(), self.indices.ravel(), indptr),
            shape=(n, n),
        )


def build_omega(Y, n_bar):
    """Per-row top-``n_bar`` label-Gram neighbors of each point.

    Y is the (n, L) binary label matrix, rows = points.  Row i of the
    result holds the n_bar indices j maximizing <y_i, y_j>, ties broken
    toward the smaller index, self-pairs included on the same footing
    (the self inner product is maximal for binary labels).  Stored values
    are the exact inner products, including zeros when a point has fewer
    than n_bar overlapping neighbors.
    """
    Y = sp.csr_array(Y, dtype=np.float64)
    n = Y.shape[0]
    if n < 1:
        raise ValueError("label matrix has no rows")
    if n_bar < 1:
        raise ValueError("n_bar must be >= 1")
    m = min(n_bar, n)

    indices = np.empty((n, m), dtype=np.int32)
    values = np.empty((n, m), dtype=np.float64)
    YT = Y.T.tocsc()
    block = max(1, min(_BLOCK, 16_000_000 // n))  # cap densified block at ~128MB
    for start in range(0, n, block):
        stop = min(start + block, n)
        block = (Y[start:stop] @ YT).toarray()
        # stable argsort on -values: descending value, ascending index on ties
        top = np.argsort(-block, axis=1, kind="stable")[:, :m]
        rows = np.arange(stop - start)[:, None]
        vals = block[rows, top]
        order = np.argsort(top, axis=1)
        indices[start:stop] = np.take_along_axis(top, order, axis=1)
        values[start:stop] = np.take_along_axis(vals, order, axis=1)
    return OmegaSet(n=n, indices=indices, values=values)


@dataclass(frozen=True)
class NeighborResult:
    indices: np.ndarray   # (k,) neighbor row indices, distinct
    distances: np.ndarray  # (k,) ascending


def knn(query, Z, k, metric="euclidean"):
    """Exact k nearest rows of Z to the query vector.

    Ties are broken toward the smaller row index.  ``metric`` is
    ``"euclidean"`` (default) or ``"inner_product"``; for the latter the
    reported "distances" are negated inner products so that smaller still
    means closer.
    """
    Z = np.asarray(Z, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] == 0:
        raise ValueError("Z must be a non-empty (m, dim) matrix")
    if query.shape != (Z.shape[1],):
        raise ValueError(f"query length {query.shape} does not match Z dim {Z.shape[1]}")
    if k < 1 or k > Z.shape[0]:
        raise ValueError(f"k must be in [1, {Z.shape[0]}], got {k}")

    if metric == "euclidean":
        d = np.linalg.norm(Z - query, axis=1)
    elif metric == "inner_product":
        d = -(Z @ query)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    idx = np.argsort(d, kind="stable")[:k]
    return NeighborResult(indices=idx.astype(np.int64), distances=d[idx])


def knn_batch(queries, Z, k, metric="euclidean"):
    """Row-wise kNN for a batch of queries; returns an (q, k) index array.

    Same ordering semantics as :func:`knn`.  Distances use the expanded
    form for speed; ordering agrees with the direct computation except on
    exact floating-point near-ties.
    """
    Z = np.asarray(Z, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    if k < 1 or k > Z.shape[0]:
        raise ValueError(f"k must be in [1, {Z.shape[0]}], got {k}")
    out = np.empty((queries.shape[0], k), dtype=np.int64)
    zz = (Z * Z).sum(axis=1)
    for start in range(0, queries.shape[0], _BLOCK):
        stop = min(start + _BLOCK, queries.shape[0])
        Q = queries[start:stop]
        if metric == "euclidean":
            d = zz[None, :] - 2.0 * (Q @ Z.T)
        elif metric == "inner_product":
            d = -(Q @ Z.T)
        else:
            raise ValueError(f"unknown metric {metric!r}")
        out[start:stop] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out
