import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from actembed.errors import AllMissingChannel, MalformedRow, WindowLongerThanSession
from actembed.ingest import (
    MISSING_LABEL,
    SynthConfig,
    generate_synthetic,
    load_canonical_csv,
    load_pamap2,
    majority_label,
    repair_missing,
    seconds_to_samples,
    segment_all,
    segment_sliding_window,
    write_canonical_csv,
)

from conftest import make_session

HEADER = "timestamp,subject,session,label,ch0,ch1\n"


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_csv_single_subject(tmp_path):
    body = "".join(f"{t},u1,r1,walk,{t},{2 * t}\n" for t in range(4))
    ss = load_canonical_csv(write(tmp_path, HEADER + body))
    assert len(ss.sessions) == 1
    assert len(ss.sessions[0]) == 4
    assert ss.channel_count == 2
    assert ss.class_names == ("walk",)


def test_csv_groups_by_subject(tmp_path):
    body = "0,u1,r1,walk,1,2\n1,u1,r1,walk,1,2\n0,u2,r1,run,3,4\n"
    ss = load_canonical_csv(write(tmp_path, HEADER + body))
    assert [s.subject_id for s in ss.sessions] == ["u1", "u2"]
    assert ss.class_names == ("walk", "run")
    assert ss.sessions[1].labels.tolist() == [1]


def test_csv_bad_cell_names_row(tmp_path):
    body = "0,u1,r1,walk,1,2\n1,u1,r1,walk,abc,2\n"
    with pytest.raises(MalformedRow) as info:
        load_canonical_csv(write(tmp_path, HEADER + body))
    assert info.value.row == 3
    assert "3" in str(info.value)


def test_csv_missing_cells_and_labels(tmp_path):
    body = "0,u1,r1,,1,nan\n1,u1,r1,walk,1,2\n"
    s = load_canonical_csv(write(tmp_path, HEADER + body), sample_rate=1.0).sessions[0]
    assert s.labels.tolist() == [MISSING_LABEL, 0]
    assert np.isnan(s.values[0, 1])
    assert s.has_missing()


def test_csv_round_trip(tmp_path, small_synth):
    ss = generate_synthetic(small_synth, 3)
    path = tmp_path / "out.csv"
    write_canonical_csv(ss, path)
    back = load_canonical_csv(path)
    assert set(back.class_names) == set(ss.class_names)
    for a, b in zip(back.sessions, ss.sessions):
        assert a.key == b.key and a.sample_rate == b.sample_rate
        assert np.array_equal(a.values, b.values)
        assert [back.class_names[i] for i in a.labels] == [ss.class_names[i] for i in b.labels]


def pamap_line(t, activity, n_channels=3, nan_at=None):
    cells = [f"{t:.2f}", str(activity)] + [f"{0.1 * c:.3f}" for c in range(n_channels)]
    if nan_at is not None:
        cells[2 + nan_at] = "NaN"
    return " ".join(cells) + "\n"


def test_pamap2_transient_only(tmp_path):
    (tmp_path / "subject101.dat").write_text("".join(pamap_line(t / 100, 0) for t in range(5)))
    ss = load_pamap2(tmp_path)
    assert ss.record_count == 0


def test_pamap2_nan_marked_missing(tmp_path):
    lines = [pamap_line(0.0, 1), pamap_line(0.01, 1, nan_at=1), pamap_line(0.02, 1)]
    (tmp_path / "subject101.dat").write_text("".join(lines))
    ss = load_pamap2(tmp_path)
    assert ss.record_count == 3
    assert int(np.isnan(ss.sessions[0].values).sum()) == 1


def test_pamap2_two_subjects(tmp_path):
    for sid, act in (("101", 1), ("102", 4)):
        (tmp_path / f"subject{sid}.dat").write_text(
            "".join(pamap_line(t / 100, act) for t in range(4)))
    ss = load_pamap2(tmp_path)
    assert len({s.subject_id for s in ss.sessions}) == 2
    assert ss.class_names == ("lying", "walking")


def test_pamap2_splits_at_gaps(tmp_path):
    lines = [pamap_line(t / 100, 1) for t in range(3)]
    lines += [pamap_line(0.03, 0)] * 1
    lines += [pamap_line(5 + t / 100, 1) for t in range(3)]
    (tmp_path / "subject101.dat").write_text("".join(lines))
    ss = load_pamap2(tmp_path)
    assert [len(s) for s in ss.sessions] == [3, 3]


def test_repair_midpoint():
    s = make_session([1.0, math.nan, 3.0])
    assert repair_missing(s).values[:, 0].tolist() == [1.0, 2.0, 3.0]


def test_repair_edge_extension():
    s = make_session([math.nan, 5.0])
    assert repair_missing(s).values[:, 0].tolist() == [5.0, 5.0]


def test_repair_all_missing():
    with pytest.raises(AllMissingChannel):
        repair_missing(make_session(np.array([[1.0, math.nan], [2.0, math.nan]])))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.one_of(st.floats(-1e3, 1e3), st.just(math.nan)), min_size=1, max_size=30)
       .filter(lambda v: any(not math.isnan(x) for x in v)))
def test_repair_idempotent(vals):
    once = repair_missing(make_session(vals))
    assert not once.has_missing()
    assert repair_missing(once) == once
    observed = [i for i, v in enumerate(vals) if not math.isnan(v)]
    assert np.array_equal(once.values[observed, 0], np.asarray(vals)[observed])


def test_segment_offsets():
    segs = segment_sliding_window(make_session(np.arange(10.0)), 4, 2)
    assert [s.start_offset for s in segs] == [0, 2, 4, 6]
    assert [s.segment_index for s in segs] == [0, 1, 2, 3]
    assert segs[1].samples[:, 0].tolist() == [2.0, 3.0, 4.0, 5.0]


def test_window_equal_to_session():
    assert len(segment_sliding_window(make_session(np.arange(6.0)), 6, 5)) == 1


def test_window_longer_than_session():
    with pytest.raises(WindowLongerThanSession):
        segment_sliding_window(make_session(np.arange(3.0)), 4, 1)


def test_pamap2_window_defaults():
    assert seconds_to_samples(5.12, 100) == 512
    assert seconds_to_samples(1.0, 100) == 100
    segs = segment_sliding_window(make_session(np.zeros(812), rate=100.0), 5.12, 1.0)
    assert [s.start_offset for s in segs] == [0, 100, 200, 300]
    assert all(s.samples.shape == (512, 1) for s in segs)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 60), st.integers(1, 20), st.integers(1, 10))
def test_segment_count_and_coverage(length, window, step):
    data = np.arange(length, dtype=np.float64)
    s = make_session(data)
    if length < window:
        with pytest.raises(WindowLongerThanSession):
            segment_sliding_window(s, window, step)
        return
    segs = segment_sliding_window(s, window, step)
    assert len(segs) == (length - window) // step + 1
    for seg in segs:
        assert np.array_equal(seg.samples[:, 0], data[seg.start_offset:seg.start_offset + window])


def test_majority_label_ties_and_missing():
    assert majority_label(np.array([2, 1, 1, 2])) == 2
    assert majority_label(np.array([-1, -1, -1, 3])) == 3
    assert majority_label(np.array([-1, -1])) == MISSING_LABEL


def test_segment_all_skips_short_sessions():
    from actembed.ingest import SessionSet
    ss = SessionSet([make_session(np.arange(10.0)), make_session(np.arange(2.0), session="r2")], 1, ("a",))
    segs, skipped = segment_all(ss, 4, 2)
    assert len(segs) == 4
    assert skipped == [("s1", "r2")]


def test_synthetic_deterministic(small_synth):
    a = generate_synthetic(small_synth, 11)
    b = generate_synthetic(small_synth, 11)
    assert all(x == y for x, y in zip(a.sessions, b.sessions))
    assert all(x.values.tobytes() == y.values.tobytes() for x, y in zip(a.sessions, b.sessions))
    c = generate_synthetic(small_synth, 12)
    assert not np.array_equal(a.sessions[0].values, c.sessions[0].values)


def test_synthetic_degenerate_constant():
    cfg = SynthConfig(("only",), ((1.5, -2.0),), ((0.0, 0.0),), subjects=2,
                      sessions_per_subject=1, bouts_per_session=2, min_bout_seconds=3,
                      max_bout_seconds=3, sample_rate=2, noise_std=0.0,
                      subject_offsets=((0.0, 0.0), (0.5, 1.0)))
    ss = generate_synthetic(cfg, 0)
    assert np.all(ss.sessions[0].values == [1.5, -2.0])
    assert np.all(ss.sessions[1].values == [2.0, -1.0])


def test_synthetic_bouts_are_exact(small_synth):
    from dataclasses import replace
    cfg = replace(small_synth, min_bout_seconds=60, max_bout_seconds=60)
    for s in generate_synthetic(cfg, 5).sessions:
        bout = 60 * int(cfg.sample_rate)
        labels = s.labels.reshape(-1, bout)
        assert len(labels) == cfg.bouts_per_session
        assert all(len(set(row.tolist())) == 1 for row in labels)
        assert all(labels[i, 0] != labels[i + 1, 0] for i in range(len(labels) - 1))
