import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from actembed.errors import TooFewSamples
from actembed.neighbors import (
    DatasetTooSmall,
    build_neighborhoods,
    dump_neighborhoods,
    knn_feature_neighbors,
    temporal_neighbors,
)

from conftest import make_matrix


def naive_knn(x, n):
    """Full distance table, ranked by (distance, index)."""
    out = []
    for i in range(len(x)):
        d = [(float(np.sum((x[j] - x[i]) ** 2)), j) for j in range(len(x)) if j != i]
        out.append([j for _, j in sorted(d)[:n]])
    return out


def test_temporal_examples():
    fm = make_matrix(np.zeros(5))
    t = temporal_neighbors(fm, 2)
    assert set(t[2].tolist()) == {1, 3}
    assert set(t[0].tolist()) == {1, 2}
    assert t[1].tolist() == [0, 2]


def test_temporal_stays_in_session():
    sessions = ["a"] * 6 + ["b"] * 3 + ["c"] * 1
    fm = make_matrix(np.zeros(10), sessions=sessions)
    for i, nb in enumerate(temporal_neighbors(fm, 4)):
        assert all(sessions[j] == sessions[i] for j in nb)
        assert i not in nb.tolist()
        assert len(nb) == min(4, sessions.count(sessions[i]) - 1)


def test_temporal_tie_prefers_earlier():
    t = temporal_neighbors(make_matrix(np.zeros(5)), 3)
    assert t[2].tolist() == [1, 3, 0]


def test_knn_examples():
    idx, dist = knn_feature_neighbors(make_matrix([0.0, 1.0, 10.0]), 1)
    assert [i.tolist() for i in idx] == [[1], [0], [1]]
    assert [d.tolist() for d in dist] == [[1.0], [1.0], [81.0]]


def test_knn_duplicates():
    idx, dist = knn_feature_neighbors(make_matrix([[1.0, 2.0], [1.0, 2.0], [5.0, 5.0]]), 1)
    assert idx[0].tolist() == [1] and idx[1].tolist() == [0]
    assert dist[0][0] == 0.0


def test_knn_exhaustive_case():
    x = np.random.default_rng(0).normal(size=(6, 2))
    idx, _ = knn_feature_neighbors(x, 5)
    for i, nb in enumerate(idx):
        assert sorted(nb.tolist()) == [j for j in range(6) if j != i]


def test_knn_small_dataset_warns():
    with pytest.warns(DatasetTooSmall):
        idx, _ = knn_feature_neighbors(np.arange(3.0)[:, None], 5)
    assert all(len(i) == 2 for i in idx)
    with pytest.raises(TooFewSamples):
        knn_feature_neighbors(np.zeros((1, 2)), 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 200), st.integers(1, 8), st.integers(1, 5), st.integers(0, 2**32 - 1),
       st.booleans())
def test_knn_matches_brute_force(s, n, d, seed, gridded):
    rng = np.random.default_rng(seed)
    # integer grids force many exact distance ties
    x = rng.integers(-3, 4, size=(s, d)).astype(float) if gridded else rng.normal(size=(s, d)) * 100
    n_eff = min(n, s - 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DatasetTooSmall)
        idx, dist = knn_feature_neighbors(x, n, chunk=37)
    expected = naive_knn(x, n_eff)
    for i in range(s):
        assert idx[i].tolist() == expected[i]
        assert np.all(np.diff(dist[i]) >= 0)


def test_build_and_dump(tmp_path):
    x = np.random.default_rng(3).normal(size=(8, 2))
    fm = make_matrix(x, sessions="aaaabbbb")
    nb = build_neighborhoods(fm, m=2, n=3)
    again = build_neighborhoods(fm, m=2, n=3)
    assert all(np.array_equal(a, b) for a, b in zip(nb.feature, again.feature))
    assert all(np.array_equal(a, b) for a, b in zip(nb.temporal, again.temporal))
    path = tmp_path / "nb.csv"
    dump_neighborhoods(nb, fm, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "row_index,kind,neighbor_rank,neighbor_index,distance"
    assert len(lines) == 1 + 8 * 2 + 8 * 3
