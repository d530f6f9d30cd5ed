"""Handcrafted per-channel window statistics and z-scoring."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, EmptySegment, EmptySeries, EmptySubset

STAT_NAMES = ("mean", "var", "std", "median", "max", "min", "iqr")
N_STATS = len(STAT_NAMES)
STD_EPS = 1e-12


def _interp_quantiles(sorted_vals, probs, axis=-1):
    """Linear-interpolation quantiles of data already sorted along ``axis``.

    Position h = p*(N-1); value = v[floor h] + frac(h) * (v[floor h + 1] - v[floor h]).
    """
    v = np.moveaxis(sorted_vals, axis, -1)
    n = v.shape[-1]
    out = []
    for p in probs:
        h = p * (n - 1)
        lo = int(np.floor(h))
        hi = min(lo + 1, n - 1)
        frac = h - lo
        out.append(v[..., lo] + frac * (v[..., hi] - v[..., lo]))
    return out


def quartiles(series) -> tuple[float, float, float]:
    v = np.sort(np.asarray(series, dtype=np.float64).ravel())
    if v.size == 0:
        raise EmptySeries("quartiles of an empty series")
    q1, q2, q3 = _interp_quantiles(v, (0.25, 0.5, 0.75))
    return float(q1), float(q2), float(q3)


def window_stats(samples: np.ndarray) -> np.ndarray:
    """Statistics of windows shaped (..., N, C) -> (..., C * 7).

    Per channel the block is mean, var (1/N), std, median, max, min, iqr,
    channel 0 first.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim < 2 or x.shape[-2] == 0:
        raise EmptySegment("window has no samples")
    mean = x.mean(axis=-2)
    var = ((x - mean[..., None, :]) ** 2).mean(axis=-2)
    s = np.sort(x, axis=-2)
    q1, q2, q3 = _interp_quantiles(s, (0.25, 0.5, 0.75), axis=-2)
    stats = np.stack(
        [mean, var, np.sqrt(var), q2, s[..., -1, :], s[..., 0, :], q3 - q1],
        axis=-1,
    )
    return stats.reshape(*stats.shape[:-2], -1)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    segment_ref: tuple  # ((subject, session), segment_index)
    label: int


def extract_features(segment) -> FeatureVector:
    return FeatureVector(
        window_stats(segment.samples),
        (segment.session_ref, segment.segment_index),
        segment.label,
    )


def feature_names(channel_count: int) -> list[str]:
    return [f"ch{c}_{s}" for c in range(channel_count) for s in STAT_NAMES]


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Row-per-window feature table with provenance columns.

    Rows are in dataset order: session order, then segment index.
    """

    values: np.ndarray  # (S, D)
    labels: np.ndarray  # (S,)
    subjects: np.ndarray  # (S,) str
    sessions: np.ndarray  # (S,) str
    segment_index: np.ndarray  # (S,)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise DimMismatch("feature values must be 2-D")
        object.__setattr__(self, "values", vals)
        for name, dt in (("labels", np.int64), ("subjects", str),
                         ("sessions", str), ("segment_index", np.int64)):
            col = np.asarray(getattr(self, name), dtype=dt)
            if col.shape != (len(vals),):
                raise DimMismatch(f"{name} has length {len(col)}, expected {len(vals)}")
            object.__setattr__(self, name, col)

    def __len__(self):
        return len(self.values)

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def session_keys(self):
        return list(zip(self.subjects.tolist(), self.sessions.tolist()))

    def row(self, i) -> FeatureVector:
        return FeatureVector(
            self.values[i],
            ((str(self.subjects[i]), str(self.sessions[i])), int(self.segment_index[i])),
            int(self.labels[i]),
        )

    @property
    def rows(self):
        return [self.row(i) for i in range(len(self))]

    def take(self, rows) -> FeatureMatrix:
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureMatrix(self.values[rows], self.labels[rows], self.subjects[rows],
                             self.sessions[rows], self.segment_index[rows])

    def with_values(self, values) -> FeatureMatrix:
        return FeatureMatrix(values, self.labels, self.subjects, self.sessions,
                             self.segment_index)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"feat_{d}" for d in range(self.dim)]
                       + ["label", "subject", "session", "segment_index"])
            for i in range(len(self)):
                w.writerow([repr(float(v)) for v in self.values[i]]
                           + [int(self.labels[i]), self.subjects[i], self.sessions[i],
                              int(self.segment_index[i])])

    @classmethod
    def from_csv(cls, path) -> FeatureMatrix:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            d = sum(1 for h in header if h.startswith("feat_"))
            rows = list(reader)
        vals = np.array([[float(c) for c in r[:d]] for r in rows], dtype=np.float64).reshape(len(rows), d)
        return cls(vals, [int(r[d]) for r in rows], [r[d + 1] for r in rows],
                   [r[d + 2] for r in rows], [int(r[d + 3]) for r in rows])


def build_feature_matrix(segments, chunk: int = 256) -> FeatureMatrix:
    """Stack ``window_stats`` of equally sized segments into a matrix."""
    if not segments:
        raise EmptySegment("no segments to featurize")
    blocks = []
    for start in range(0, len(segments), chunk):
        batch = np.stack([s.samples for s in segments[start:start + chunk]])
        blocks.append(window_stats(batch))
    return FeatureMatrix(
        np.concatenate(blocks),
        [s.label for s in segments],
        [s.session_ref[0] for s in segments],
        [s.session_ref[1] for s in segments],
        [s.segment_index for s in segments],
    )


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != len(self.mean):
            raise DimMismatch(f"expected {len(self.mean)} dims, got {values.shape[-1]}")
        return (values - self.mean) / self.std

    def invert(self, values):
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


def fit_standardizer(matrix: FeatureMatrix, row_subset=None) -> Standardizer:
    """Per-dimension population mean/std over ``row_subset`` (all rows if None).

    Zero-variance dimensions get std = STD_EPS; since every fitting row then
    equals the mean exactly, they standardize to 0.
    """
    vals = matrix.values if row_subset is None else matrix.values[np.asarray(row_subset, dtype=np.int64)]
    if len(vals) == 0:
        raise EmptySubset("cannot fit a standardizer on zero rows")
    mean = vals.mean(axis=0)
    std = np.sqrt(((vals - mean) ** 2).mean(axis=0))
    # a constant column can leave a rounding residue in mean; snap it
    const = np.all(vals == vals[0], axis=0)
    mean = np.where(const, vals[0], mean)
    std = np.where(const | (std < STD_EPS), STD_EPS, std)
    return Standardizer(mean, std)


def apply_standardizer(std: Standardizer, matrix: FeatureMatrix) -> FeatureMatrix:
    return matrix.with_values(std.apply(matrix.values))
