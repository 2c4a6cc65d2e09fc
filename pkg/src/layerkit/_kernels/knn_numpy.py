"""Pure-numpy kNN labeling kernel (fallback backend).

Implements the same contract as the compiled kernel: for each query, find
the k stored points with smallest squared Euclidean distance, resolving a
tie at the k-th slot in favor of the earlier insertion index, then majority
vote with ties broken by smaller summed neighbor distance, then smaller
class index. Distances use the expanded form |q|^2 - 2 q.p + |p|^2 via one
GEMM per query chunk; the selection set is fixed up exactly on the rare rows
with duplicated boundary distances.
"""

import numpy as np

N_CLASSES = 4
_CHUNK = 256


def knn_label_batch(
    points: np.ndarray,
    labels: np.ndarray,
    queries: np.ndarray,
    k: int,
    num_threads: int = 0,
) -> np.ndarray:
    """Predict int32 class labels for each query row.

    Args:
        points: (n, d) float64, C-contiguous stored points.
        labels: (n,) int32 class labels in [0, 3].
        queries: (m, d) float64 query rows.
        k: neighbor count, 1 <= k <= n.
        num_threads: ignored (numpy backend).

    Returns:
        (m,) int32 predicted labels.
    """
    n = points.shape[0]
    m = queries.shape[0]
    out = np.empty(m, dtype=np.int32)
    if m == 0:
        return out
    pnorm = np.einsum("ij,ij->i", points, points)
    for start in range(0, m, _CHUNK):
        q = queries[start : start + _CHUNK]
        d2 = np.einsum("ij,ij->i", q, q)[:, None] - 2.0 * (q @ points.T)
        d2 += pnorm[None, :]
        idx = _select_k(d2, k, n)
        out[start : start + _CHUNK] = _vote(d2, idx, labels)
    return out


def _select_k(d2: np.ndarray, k: int, n: int) -> np.ndarray:
    """Indices of the k smallest entries per row under the (value, index) rule."""
    rows = d2.shape[0]
    if k == n:
        return np.broadcast_to(np.arange(n), (rows, n))
    idx = np.argpartition(d2, k - 1, axis=1)[:, :k]
    kth = np.take_along_axis(d2, idx, axis=1).max(axis=1)
    # rows where more than k entries are <= the k-th value have boundary
    # duplicates; re-select those by (value, index) exactly
    n_le = (d2 <= kth[:, None]).sum(axis=1)
    fix = np.flatnonzero(n_le > k)
    if fix.size:
        idx = idx.copy()
        for r in fix:
            row = d2[r]
            lt = np.flatnonzero(row < kth[r])
            eq = np.flatnonzero(row == kth[r])[: k - lt.size]
            idx[r] = np.concatenate([lt, eq])
    return idx


def _vote(d2: np.ndarray, idx: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Majority vote per row; ties by smaller distance total, then class."""
    rows = d2.shape[0]
    nlab = labels[idx]
    nd = np.take_along_axis(d2, idx, axis=1)
    counts = np.empty((rows, N_CLASSES), dtype=np.int64)
    totals = np.empty((rows, N_CLASSES), dtype=np.float64)
    for c in range(N_CLASSES):
        mask = nlab == c
        counts[:, c] = mask.sum(axis=1)
        totals[:, c] = np.where(mask, nd, 0.0).sum(axis=1)
    best = np.zeros(rows, dtype=np.int32)
    best_cnt = counts[:, 0].copy()
    best_tot = totals[:, 0].copy()
    for c in range(1, N_CLASSES):
        better = (counts[:, c] > best_cnt) | (
            (counts[:, c] == best_cnt) & (totals[:, c] < best_tot)
        )
        best = np.where(better, np.int32(c), best)
        best_cnt = np.where(better, counts[:, c], best_cnt)
        best_tot = np.where(better, totals[:, c], best_tot)
    return best
