"""Lloyd's k-means with k-means++ seeding and best-of-restarts selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, InvalidConfig, TooFewDistinctPoints


@dataclass(frozen=True, eq=False)
class ClusterModel:
    centroids: np.ndarray
    inertia: float
    k: int
    restarts_run: int
    best_restart: int = 0
    inertia_trace: list = field(default_factory=list)  # per Lloyd iteration, best restart


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: np.ndarray
    distances: np.ndarray  # Euclidean distance to own centroid


def _sq_dists(points, centroids):
    d = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


def kmeans_pp_init(points, k: int, seed: int) -> np.ndarray:
    """D^2 sampling: first centre uniform, later ones proportional to the
    squared distance to the nearest chosen centre."""
    x = np.asarray(points, dtype=np.float64)
    if len(x) == 0:
        raise EmptyInput("no points")
    if k < 1:
        raise InvalidConfig("k must be >= 1")
    if k > len(np.unique(x, axis=0)):
        raise TooFewDistinctPoints(f"k={k} exceeds the number of distinct points")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(len(x)))]
    closest = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        # a distinct point always exists, so total > 0
        idx = int(rng.choice(len(x), p=closest / total))
        chosen.append(idx)
        closest = np.minimum(closest, np.sum((x - x[idx]) ** 2, axis=1))
    return x[chosen].copy()


def _lloyd(x, centroids, max_iters, tol):
    k = len(centroids)
    labels = None
    trace = []
    for _ in range(max_iters):
        d = _sq_dists(x, centroids)
        new_labels = np.argmin(d, axis=1)  # ties -> lowest centroid id
        trace.append(float(d[np.arange(len(x)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        own = d[np.arange(len(x)), labels].copy()
        new = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        for c in range(k):
            if counts[c]:
                new[c] = x[labels == c].mean(axis=0)
        for c in np.flatnonzero(counts == 0):
            far = int(np.argmax(own))
            new[c] = x[far]
            own[far] = -1.0
        shift = float(np.sqrt(np.max(np.sum((new - centroids) ** 2, axis=1))))
        centroids = new
        if shift < tol:
            break
    d = _sq_dists(x, centroids)
    labels = np.argmin(d, axis=1)
    own = d[np.arange(len(x)), labels]
    inertia = float(own.sum())
    trace.append(inertia)
    return centroids, labels, own, inertia, trace


def kmeans(points, k: int, restarts: int = 10, max_iters: int = 300,
           tol: float = 1e-6, seed: int = 0):
    """Best of ``restarts`` Lloyd runs seeded with seed, seed + 1, ...

    Returns ``(ClusterModel, ClusterAssignment)``. Restarts are compared by
    (inertia, restart index).
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise EmptyInput("kmeans needs a non-empty 2-D point array")
    if restarts < 1:
        raise InvalidConfig("restarts must be >= 1")
    best = None
    for r in range(restarts):
        init = kmeans_pp_init(x, k, seed + r)
        cent, labels, own, inertia, trace = _lloyd(x, init, max_iters, tol)
        if best is None or inertia < best[3]:
            best = (cent, labels, own, inertia, trace, r)
    cent, labels, own, inertia, trace, r = best
    model = ClusterModel(cent, inertia, k, restarts, r, trace)
    return model, ClusterAssignment(labels, np.sqrt(own))


def dump_assignment(assignment: ClusterAssignment, path, row_index=None) -> None:
    rows = range(len(assignment.labels)) if row_index is None else row_index
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_index", "cluster_id", "distance_to_centroid"])
        for i, lab, dist in zip(rows, assignment.labels, assignment.distances):
            w.writerow([int(i), int(lab), repr(float(dist))])
