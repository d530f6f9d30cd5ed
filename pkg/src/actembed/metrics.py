"""External clustering scores computed from a cluster-by-class contingency table."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import LengthMismatch, TooFewSamples


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    counts: np.ndarray  # [clusters x classes]

    @property
    def cluster_sizes(self):
        return self.counts.sum(axis=1)

    @property
    def class_sizes(self):
        return self.counts.sum(axis=0)

    @property
    def total(self):
        return int(self.counts.sum())


def as_table(table) -> ContingencyTable:
    if isinstance(table, ContingencyTable):
        return table
    counts = np.asarray(table, dtype=np.int64)
    if counts.ndim != 2 or (counts < 0).any():
        raise ValueError("contingency counts must be a non-negative 2-D array")
    return ContingencyTable(counts)


def contingency(pred, truth, n_clusters: int | None = None,
                n_classes: int | None = None) -> ContingencyTable:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(truth)} labels")
    if len(pred) == 0:
        raise TooFewSamples("empty labelings")
    if pred.min() < 0 or truth.min() < 0:
        raise ValueError("cluster and class ids must be non-negative")
    rows = max(int(pred.max()) + 1, n_clusters or 0)
    cols = max(int(truth.max()) + 1, n_classes or 0)
    counts = np.zeros((rows, cols), dtype=np.int64)
    np.add.at(counts, (pred, truth), 1)
    return ContingencyTable(counts)


def best_assignment(table) -> dict[int, int]:
    """ACC-optimal one-to-one cluster -> class mapping.

    Solved as a linear assignment on the negated counts padded to a square
    matrix with zeros; matches onto padding are dropped.
    """
    c = as_table(table).counts
    size = max(c.shape)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[: c.shape[0], : c.shape[1]] = c
    rows, cols = linear_sum_assignment(-padded)
    return {int(r): int(k) for r, k in zip(rows, cols)
            if r < c.shape[0] and k < c.shape[1]}


def acc(table) -> float:
    t = as_table(table)
    if t.total == 0:
        return 0.0
    matched = sum(int(t.counts[r, k]) for r, k in best_assignment(t).items())
    return matched / t.total


def _pairs(v) -> int:
    return sum(int(a) * (int(a) - 1) // 2 for a in np.ravel(v))


def _is_identity_partition(c) -> bool:
    nz = c > 0
    return bool(np.all(nz.sum(axis=1) <= 1) and np.all(nz.sum(axis=0) <= 1))


def ari(table) -> float:
    """Adjusted Rand index from pair counts (exact integer binomials).

    When the denominator vanishes the score is 1.0 for identical partitions
    and 0.0 otherwise.
    """
    t = as_table(table)
    n = t.total
    if n < 2:
        raise TooFewSamples("ARI needs at least two samples")
    index = _pairs(t.counts)
    a = _pairs(t.cluster_sizes)
    b = _pairs(t.class_sizes)
    expected = (a * b) / (n * (n - 1) // 2)
    denom = 0.5 * (a + b) - expected
    if denom == 0:
        return 1.0 if _is_identity_partition(t.counts) else 0.0
    return (index - expected) / denom


def nmi(table) -> float:
    """Normalized mutual information, geometric-mean normalization, natural log.

    Returns 1.0 when both partitions are a single block and 0.0 when only one
    of them is (zero entropy makes the ratio undefined).
    """
    t = as_table(table)
    n = t.total
    if n < 1:
        raise TooFewSamples("NMI needs at least one sample")
    ni = [int(v) for v in t.cluster_sizes if v > 0]
    nj = [int(v) for v in t.class_sizes if v > 0]
    rows, cols = t.counts.shape
    rs, cs = t.cluster_sizes, t.class_sizes
    # log(n / n_i) keeps like terms bit-identical between numerator and
    # denominator, so identical partitions give exactly 1.0
    mi = math.fsum(
        int(t.counts[i, j]) * math.log((n * int(t.counts[i, j])) / (int(rs[i]) * int(cs[j])))
        for i in range(rows) for j in range(cols) if t.counts[i, j] > 0
    )
    h_clusters = math.fsum(v * math.log(n / v) for v in ni)
    h_classes = math.fsum(v * math.log(n / v) for v in nj)
    if h_clusters == 0 or h_classes == 0:
        return 1.0 if h_clusters == 0 and h_classes == 0 else 0.0
    return mi / math.sqrt(h_clusters * h_classes)


def confusion_after_assignment(table):
    """Rows reordered so each matched cluster sits on its class's diagonal.

    Returns ``(matrix, mapping, row_order)``: the reordered counts, the
    cluster -> class mapping (-1 for unmatched clusters) and the original
    cluster id of each output row. Unmatched clusters follow the matched
    ones in cluster-id order.
    """
    c = as_table(table).counts
    mapping = best_assignment(c)
    matched = sorted(mapping, key=lambda r: mapping[r])
    unmatched = [r for r in range(c.shape[0]) if r not in mapping]
    order = matched + unmatched
    full = {r: mapping.get(r, -1) for r in range(c.shape[0])}
    return c[order], full, order


def write_confusion_csv(table, class_names, path) -> None:
    matrix, mapping, order = confusion_after_assignment(table)
    names = list(class_names) + [f"class_{j}" for j in range(len(class_names), matrix.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster", "matched_class"] + names[: matrix.shape[1]])
        for r, row in zip(order, matrix):
            cls = mapping[r]
            w.writerow([r, names[cls] if cls >= 0 else ""] + [int(v) for v in row])
