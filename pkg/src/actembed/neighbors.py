"""Temporal and feature-space neighbourhoods used by the auxiliary losses."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, TooFewSamples

log = logging.getLogger(__name__)


class DatasetTooSmall(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class NeighborhoodIndex:
    temporal: list  # per row: int array of row indices
    feature: list
    m: int
    n: int
    feature_dist: list | None = None

    @property
    def empty_temporal_rows(self):
        return [i for i, t in enumerate(self.temporal) if len(t) == 0]


def temporal_neighbors(matrix, m: int) -> list[np.ndarray]:
    """For each row, the ``m`` rows of its session closest in segment index.

    Ties in index distance go to the smaller segment index. Sessions with
    fewer than m + 1 segments give every other row of the session.
    """
    if m < 1:
        raise InvalidConfig("m must be >= 1")
    keys = matrix.session_keys
    seg = matrix.segment_index
    by_session: dict[tuple, list[int]] = {}
    for i, k in enumerate(keys):
        by_session.setdefault(k, []).append(i)
    out = [None] * len(matrix)
    for rows in by_session.values():
        rows = np.asarray(rows, dtype=np.int64)
        pos = seg[rows]
        for i in rows:
            mask = rows != i
            cand = rows[mask]
            gap = np.abs(pos[mask] - seg[i])
            order = np.lexsort((pos[mask], gap))
            out[i] = cand[order[:m]]
    return out


def _pairwise_sq(a, b):
    d = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


def brute_force_knn(x, n: int):
    """Reference O(S^2) kNN by explicit differences; returns (indices, sq_dists)."""
    x = np.asarray(x, dtype=np.float64)
    s = len(x)
    k = min(n, s - 1)
    idx, dist = [], []
    for i in range(s):
        d = _pairwise_sq(x[i:i + 1], x)[0]
        others = np.delete(np.arange(s), i)
        order = np.lexsort((others, d[others]))[:k]
        idx.append(others[order])
        dist.append(d[others][order])
    return idx, dist


def knn_feature_neighbors(matrix, n: int, chunk: int = 512):
    """Exact Euclidean kNN per row, excluding the row itself.

    Candidates are prefiltered with the Gram-matrix expansion of the squared
    distance, widened by a bound on its rounding error, then ranked on exact
    squared differences with ties broken by row index. The result matches
    ``brute_force_knn``.

    Returns ``(indices, sq_distances)``, both lists of arrays.
    """
    if n < 1:
        raise InvalidConfig("n must be >= 1")
    x = np.asarray(getattr(matrix, "values", matrix), dtype=np.float64)
    s = len(x)
    if s < 2:
        raise TooFewSamples("kNN needs at least two rows")
    k = n
    if s <= n:
        warnings.warn(f"dataset of {s} rows too small for n={n}; using all other rows",
                      DatasetTooSmall, stacklevel=2)
        k = s - 1
    sq = np.einsum("ij,ij->i", x, x)
    scale = float(sq.max()) if s else 0.0
    idx_out, dist_out = [], []
    all_rows = np.arange(s)
    for start in range(0, s, chunk):
        stop = min(s, start + chunk)
        approx = sq[start:stop, None] + sq[None, :] - 2.0 * (x[start:stop] @ x.T)
        for r, i in enumerate(range(start, stop)):
            row = approx[r]
            row[i] = np.inf
            kth = np.partition(row, k - 1)[k - 1]
            tol = 1e-9 * (sq[i] + scale) + 1e-12
            cand = all_rows[row <= kth + tol]
            diff = x[cand] - x[i]
            exact = np.einsum("ij,ij->i", diff, diff)
            order = np.lexsort((cand, exact))[:k]
            idx_out.append(cand[order])
            dist_out.append(exact[order])
    return idx_out, dist_out


def build_neighborhoods(matrix, m: int = 5, n: int = 5) -> NeighborhoodIndex:
    temporal = temporal_neighbors(matrix, m)
    feature, fdist = knn_feature_neighbors(matrix, n)
    idx = NeighborhoodIndex(temporal, feature, m, n, fdist)
    if idx.empty_temporal_rows:
        log.info("%d rows have no temporal neighbours", len(idx.empty_temporal_rows))
    return idx


def dump_neighborhoods(index: NeighborhoodIndex, values, path) -> None:
    x = np.asarray(getattr(values, "values", values), dtype=np.float64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_index", "kind", "neighbor_rank", "neighbor_index", "distance"])
        for i in range(len(x)):
            for kind, lists in (("temporal", index.temporal), ("feature", index.feature)):
                for rank, j in enumerate(lists[i]):
                    dist = float(np.sqrt(np.sum((x[i] - x[j]) ** 2)))
                    w.writerow([i, kind, rank, int(j), repr(dist)])
