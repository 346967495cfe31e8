"""Pure-numpy fallback for the compiled scan kernels.

Results are bit-identical to the compiled backend: products are taken in
float64 and accumulated left to right per row (a column sweep here, a
sequential inner loop there). A row's score therefore depends only on that
row and the query, never on which other rows share the call, which is what
keeps probed-posting scans and exhaustive scans in exact agreement.
"""

from __future__ import annotations

import numpy as np


def dot_scores(mat: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Float64 inner product of every row of a float32 matrix with a float32 query."""
    mat = np.ascontiguousarray(mat, dtype=np.float32)
    q = np.ascontiguousarray(q, dtype=np.float32)
    if mat.ndim != 2 or q.ndim != 1 or mat.shape[1] != q.shape[0]:
        raise ValueError(f"shape mismatch: mat {mat.shape} vs q {q.shape}")
    n, d = mat.shape
    if n == 0:
        return np.empty(0, dtype=np.float64)
    m64 = mat.astype(np.float64)
    q64 = q.astype(np.float64)
    acc = np.zeros(n, dtype=np.float64)
    for j in range(d):
        acc += m64[:, j] * q64[j]
    return acc


def gather_dot_scores(mat: np.ndarray, ids: np.ndarray, q: np.ndarray) -> np.ndarray:
    """dot_scores over the rows selected by ids (int64), in ids order."""
    mat = np.ascontiguousarray(mat, dtype=np.float32)
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    if ids.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    if ids.min() < 0 or ids.max() >= mat.shape[0]:
        raise IndexError(f"row ids out of range [0, {mat.shape[0]})")
    return dot_scores(mat[ids], q)


def sparse_dot(a_ids: np.ndarray, a_w: np.ndarray, b_ids: np.ndarray, b_w: np.ndarray) -> float:
    """Dot product of two sparse vectors given as (ascending ids, weights)."""
    a_ids = np.ascontiguousarray(a_ids, dtype=np.int64)
    b_ids = np.ascontiguousarray(b_ids, dtype=np.int64)
    if a_ids.shape[0] == 0 or b_ids.shape[0] == 0:
        return 0.0
    _, ia, ib = np.intersect1d(a_ids, b_ids, assume_unique=True, return_indices=True)
    if ia.shape[0] == 0:
        return 0.0
    prod = np.asarray(a_w, dtype=np.float64)[ia] * np.asarray(b_w, dtype=np.float64)[ib]
    # Plain sum keeps the same left-to-right order as the merging kernel.
    return float(sum(prod.tolist()))
