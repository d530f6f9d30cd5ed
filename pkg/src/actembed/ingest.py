"""Loading, repairing and windowing of multichannel sensor sessions."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    AllMissingChannel,
    EmptyDirectory,
    EmptyFile,
    InvalidConfig,
    MalformedRow,
    MissingColumn,
    WindowLongerThanSession,
)

log = logging.getLogger(__name__)

MISSING_LABEL = -1

PAMAP2_ACTIVITIES = {
    1: "lying", 2: "sitting", 3: "standing", 4: "walking", 5: "running",
    6: "cycling", 7: "nordic_walking", 9: "watching_tv", 10: "computer_work",
    11: "car_driving", 12: "ascending_stairs", 13: "descending_stairs",
    16: "vacuum_cleaning", 17: "ironing", 18: "folding_laundry",
    19: "house_cleaning", 20: "playing_soccer", 24: "rope_jumping",
}


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SensorRecord:
    timestamp: float
    channels: tuple
    label: int  # MISSING_LABEL when unknown


@dataclass(frozen=True, eq=False)
class Session:
    """One contiguous recording of one subject.

    Records are stored column-wise: ``timestamps`` (N,), ``values`` (N, C)
    with NaN marking a missing cell, and ``labels`` (N,) with
    ``MISSING_LABEL`` for unlabeled rows.
    """

    subject_id: str
    session_id: str
    sample_rate: float
    timestamps: np.ndarray
    values: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise InvalidConfig(f"sample_rate must be positive, got {self.sample_rate}")
        ts = _frozen(self.timestamps, np.float64)
        vals = _frozen(self.values, np.float64)
        labs = _frozen(self.labels, np.int64)
        if vals.ndim != 2 or len(vals) != len(ts) or len(labs) != len(ts):
            raise ValueError("timestamps, values and labels must have matching lengths")
        if np.any(np.diff(ts) < 0):
            raise ValueError(f"session {self.key}: timestamps not ordered")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "labels", labs)

    @property
    def key(self):
        return (self.subject_id, self.session_id)

    @property
    def channel_count(self):
        return self.values.shape[1]

    def __len__(self):
        return len(self.timestamps)

    @property
    def records(self) -> Iterator[SensorRecord]:
        for t, row, lab in zip(self.timestamps, self.values, self.labels):
            yield SensorRecord(float(t), tuple(float(v) for v in row), int(lab))

    def has_missing(self):
        return bool(np.isnan(self.values).any())

    def __eq__(self, other):
        if not isinstance(other, Session):
            return NotImplemented
        return (
            self.key == other.key
            and self.sample_rate == other.sample_rate
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values, equal_nan=True)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass(frozen=True)
class SessionSet:
    sessions: tuple
    channel_count: int
    class_names: tuple

    def __post_init__(self):
        object.__setattr__(self, "sessions", tuple(self.sessions))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        for s in self.sessions:
            if s.channel_count != self.channel_count:
                raise ValueError(
                    f"session {s.key} has {s.channel_count} channels, "
                    f"expected {self.channel_count}"
                )

    @property
    def record_count(self):
        return sum(len(s) for s in self.sessions)

    def select_channels(self, channels: Sequence[int]) -> SessionSet:
        channels = list(channels)
        for c in channels:
            if not 0 <= c < self.channel_count:
                raise InvalidConfig(f"channel index {c} out of range 0..{self.channel_count - 1}")
        sessions = [
            Session(s.subject_id, s.session_id, s.sample_rate, s.timestamps,
                    s.values[:, channels], s.labels)
            for s in self.sessions
        ]
        return SessionSet(sessions, len(channels), self.class_names)


@dataclass(frozen=True, eq=False)
class Segment:
    segment_index: int
    session_ref: tuple
    start_time: float
    start_offset: int
    samples: np.ndarray  # [window_length x channel_count], read-only view
    label: int


@dataclass(frozen=True)
class CsvSchema:
    timestamp: str = "timestamp"
    subject: str = "subject"
    session: str = "session"
    label: str = "label"
    channels: tuple = field(default=())  # empty: every column named ch<k>


def _parse_float(cell, row):
    text = cell.strip()
    if text.lower() == "nan":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise MalformedRow(row, f"non-numeric value {cell!r}") from None


def _infer_rate(timestamps):
    dt = np.diff(timestamps)
    dt = dt[dt > 0]
    if len(dt) == 0:
        return 1.0
    # decimal timestamps leave float noise in the reciprocal
    return float(f"{1.0 / np.median(dt):.9g}")


def load_canonical_csv(path, schema: CsvSchema | None = None,
                       sample_rate: float | None = None) -> SessionSet:
    """Read the canonical long-format CSV into sessions.

    Row numbers in errors count the header as row 1. Labels become dense
    ids in order of first appearance; an empty or ``nan`` label cell is
    MISSING. Without ``sample_rate`` the rate is estimated per session from
    the median timestamp spacing.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path}: no header row")
        header = [h.strip() for h in header]
        index = {name: i for i, name in enumerate(header)}
        channel_cols = list(schema.channels) or [
            h for h in header if h.startswith("ch") and h[2:].isdigit()
        ]
        required = [schema.timestamp, schema.subject, schema.session, schema.label]
        for name in required + channel_cols:
            if name not in index:
                raise MissingColumn(f"{path}: column {name!r} not found")
        if not channel_cols:
            raise MissingColumn(f"{path}: no channel columns")
        ch_idx = [index[c] for c in channel_cols]
        ti, si, ei, li = (index[c] for c in required)

        class_ids: dict[str, int] = {}
        groups: dict[tuple, list] = {}
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(rownum, f"expected {len(header)} cells, got {len(row)}")
            t = _parse_float(row[ti], rownum)
            if math.isnan(t):
                raise MalformedRow(rownum, "missing timestamp")
            chans = [_parse_float(row[i], rownum) for i in ch_idx]
            raw_label = row[li].strip()
            if raw_label == "" or raw_label.lower() == "nan":
                label = MISSING_LABEL
            else:
                label = class_ids.setdefault(raw_label, len(class_ids))
            key = (row[si].strip(), row[ei].strip())
            groups.setdefault(key, []).append((t, chans, label))
    if not groups:
        raise EmptyFile(f"{path}: no data rows")

    sessions = []
    for (subject, session), rows in groups.items():
        rows.sort(key=lambda r: r[0])  # stable: equal timestamps keep file order
        ts = np.array([r[0] for r in rows])
        rate = sample_rate if sample_rate is not None else _infer_rate(ts)
        sessions.append(Session(
            subject, session, rate, ts,
            np.array([r[1] for r in rows], dtype=np.float64).reshape(len(rows), len(ch_idx)),
            np.array([r[2] for r in rows], dtype=np.int64),
        ))
    return SessionSet(sessions, len(ch_idx), list(class_ids))


def write_canonical_csv(sessions: SessionSet, path) -> None:
    names = sessions.class_names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "subject", "session", "label"]
                   + [f"ch{c}" for c in range(sessions.channel_count)])
        for s in sessions.sessions:
            for t, row, lab in zip(s.timestamps, s.values, s.labels):
                label = "" if lab == MISSING_LABEL else names[lab]
                w.writerow([repr(float(t)), s.subject_id, s.session_id, label]
                           + [repr(float(v)) for v in row])


def load_pamap2(directory, sample_rate: float = 100.0,
                max_gap_seconds: float = 1.0) -> SessionSet:
    """Read PAMAP2 ``.dat`` files (one per subject) from ``directory``.

    Transient rows (activity 0) are dropped. A file is split into several
    sessions wherever consecutive kept rows are more than
    ``max_gap_seconds`` apart, so temporal neighbours never bridge a
    removed stretch of recording.
    """
    directory = Path(directory)
    files = sorted(directory.glob("*.dat"))
    if not files:
        raise EmptyDirectory(f"{directory}: no .dat files")

    per_file = []
    width = None
    for path in files:
        rows = []
        with open(path, encoding="utf-8") as fh:
            for rownum, line in enumerate(fh, start=1):
                cells = line.split()
                if not cells:
                    continue
                if width is None:
                    width = len(cells)
                if len(cells) != width or width < 3:
                    raise MalformedRow(rownum, f"{path.name}: expected {width} columns, got {len(cells)}")
                vals = [_parse_float(c, rownum) for c in cells]
                if math.isnan(vals[0]) or math.isnan(vals[1]):
                    raise MalformedRow(rownum, f"{path.name}: missing timestamp or activity id")
                if vals[1] == 0:
                    continue
                rows.append(vals)
        per_file.append((path.stem, rows))
    if width is None:
        raise EmptyDirectory(f"{directory}: all files empty")

    activity_ids = sorted({int(r[1]) for _, rows in per_file for r in rows})
    dense = {a: i for i, a in enumerate(activity_ids)}
    names = [PAMAP2_ACTIVITIES.get(a, f"activity_{a}") for a in activity_ids]

    sessions = []
    for stem, rows in per_file:
        if not rows:
            continue
        arr = np.array(rows, dtype=np.float64)
        order = np.argsort(arr[:, 0], kind="stable")
        arr = arr[order]
        breaks = np.flatnonzero(np.diff(arr[:, 0]) > max_gap_seconds) + 1
        for part, chunk in enumerate(np.split(arr, breaks)):
            sessions.append(Session(
                stem, f"{stem}#{part}", sample_rate, chunk[:, 0], chunk[:, 2:],
                np.array([dense[int(a)] for a in chunk[:, 1]], dtype=np.int64),
            ))
    return SessionSet(sessions, width - 2, names)


def repair_missing(session: Session) -> Session:
    """Fill NaN cells by linear interpolation along the sample index.

    Leading and trailing gaps take the nearest observed value.
    """
    if len(session) == 0:
        raise ValueError(f"session {session.key} is empty")
    values = session.values
    if not np.isnan(values).any():
        return session
    out = np.array(values, copy=True)
    pos = np.arange(len(values), dtype=np.float64)
    for c in range(values.shape[1]):
        col = values[:, c]
        bad = np.isnan(col)
        if not bad.any():
            continue
        if bad.all():
            raise AllMissingChannel(c)
        out[bad, c] = np.interp(pos[bad], pos[~bad], col[~bad])
    return Session(session.subject_id, session.session_id, session.sample_rate,
                   session.timestamps, out, session.labels)


def seconds_to_samples(seconds: float, sample_rate: float) -> int:
    return int(round(seconds * sample_rate))


def majority_label(labels: np.ndarray) -> int:
    """Most frequent label; ties go to the class that appears first."""
    labels = labels[labels != MISSING_LABEL]
    if len(labels) == 0:
        return MISSING_LABEL
    uniq, first, counts = np.unique(labels, return_index=True, return_counts=True)
    best = counts.max()
    cand = first[counts == best]
    return int(labels[cand.min()])


def segment_sliding_window(session: Session, window_seconds: float,
                           step_seconds: float) -> list[Segment]:
    if window_seconds <= 0 or step_seconds <= 0:
        raise InvalidConfig("window_seconds and step_seconds must be positive")
    if session.has_missing():
        raise ValueError(f"session {session.key} has missing cells; repair it first")
    w = seconds_to_samples(window_seconds, session.sample_rate)
    step = seconds_to_samples(step_seconds, session.sample_rate)
    if w < 1 or step < 1:
        raise InvalidConfig(
            f"window/step shorter than one sample at {session.sample_rate} Hz"
        )
    n = len(session)
    if n < w:
        raise WindowLongerThanSession(
            f"session {session.key}: {n} samples < window of {w}"
        )
    segments = []
    for i, start in enumerate(range(0, n - w + 1, step)):
        segments.append(Segment(
            segment_index=i,
            session_ref=session.key,
            start_time=float(session.timestamps[start]),
            start_offset=start,
            samples=session.values[start:start + w],
            label=majority_label(session.labels[start:start + w]),
        ))
    return segments


def segment_all(sessions: SessionSet, window_seconds: float, step_seconds: float):
    """Repair and window every session.

    Returns ``(segments, skipped)`` where ``skipped`` lists the keys of
    sessions shorter than one window.
    """
    segments, skipped = [], []
    for s in sessions.sessions:
        if len(s) == 0:
            skipped.append(s.key)
            continue
        try:
            segments.extend(segment_sliding_window(repair_missing(s), window_seconds, step_seconds))
        except WindowLongerThanSession as exc:
            log.warning("%s", exc)
            skipped.append(s.key)
    return segments, skipped


@dataclass(frozen=True)
class SynthConfig:
    """Activity regimes for the synthetic generator.

    ``amplitudes`` and ``frequencies`` are [classes x channels]. Channel c
    of class k is ``amplitudes[k][c] * cos(2*pi*frequencies[k][c]*t + phase)``
    with a random phase per bout (zero when the frequency is zero), plus the
    subject offset and Gaussian noise.
    """

    class_names: tuple
    amplitudes: tuple
    frequencies: tuple
    subjects: int = 4
    sessions_per_subject: int = 2
    bouts_per_session: int = 6
    min_bout_seconds: float = 30.0
    max_bout_seconds: float = 30.0
    sample_rate: float = 20.0
    noise_std: float = 0.1
    subject_offset_std: float = 0.5
    subject_offsets: tuple = ()  # explicit [subjects x channels]; overrides subject_offset_std

    @property
    def channel_count(self):
        return len(self.amplitudes[0])

    def validate(self):
        k = len(self.class_names)
        if k < 1:
            raise InvalidConfig("synthetic config needs at least one class")
        if len(self.amplitudes) != k or len(self.frequencies) != k:
            raise InvalidConfig("amplitudes/frequencies need one row per class")
        c = len(self.amplitudes[0])
        if c < 1 or any(len(r) != c for r in self.amplitudes + self.frequencies):
            raise InvalidConfig("every class needs one amplitude and frequency per channel")
        if self.subjects < 1 or self.sessions_per_subject < 1 or self.bouts_per_session < 1:
            raise InvalidConfig("subjects, sessions_per_subject and bouts_per_session must be >= 1")
        if not (self.sample_rate > 0 and self.min_bout_seconds > 0):
            raise InvalidConfig("sample_rate and min_bout_seconds must be positive")
        if self.max_bout_seconds < self.min_bout_seconds:
            raise InvalidConfig("max_bout_seconds < min_bout_seconds")
        if self.noise_std < 0 or self.subject_offset_std < 0:
            raise InvalidConfig("noise_std and subject_offset_std must be non-negative")
        if self.subject_offsets and (
            len(self.subject_offsets) != self.subjects
            or any(len(r) != c for r in self.subject_offsets)
        ):
            raise InvalidConfig("subject_offsets must be [subjects x channels]")


def _bout_classes(rng, n_classes, n_bouts):
    seq = []
    while len(seq) < n_bouts:
        perm = list(rng.permutation(n_classes))
        if seq and n_classes > 1 and perm[0] == seq[-1]:
            perm[0], perm[-1] = perm[-1], perm[0]
        seq.extend(int(p) for p in perm)
    return seq[:n_bouts]


def generate_synthetic(config: SynthConfig, seed: int) -> SessionSet:
    config.validate()
    rng = np.random.default_rng(seed)
    amps = np.asarray(config.amplitudes, dtype=np.float64)
    freqs = np.asarray(config.frequencies, dtype=np.float64)
    n_classes, n_ch = amps.shape
    if config.subject_offsets:
        offsets = np.asarray(config.subject_offsets, dtype=np.float64)
    else:
        offsets = rng.normal(0.0, config.subject_offset_std, size=(config.subjects, n_ch))
    rate = config.sample_rate
    min_len = math.ceil(config.min_bout_seconds * rate - 1e-9)
    max_len = max(min_len, int(math.floor(config.max_bout_seconds * rate + 1e-9)))

    sessions = []
    for subj in range(config.subjects):
        for sess in range(config.sessions_per_subject):
            classes = _bout_classes(rng, n_classes, config.bouts_per_session)
            chunks, labels = [], []
            t0 = 0
            for k in classes:
                length = int(rng.integers(min_len, max_len + 1))
                t = (t0 + np.arange(length)) / rate
                phase = np.where(freqs[k] > 0, rng.uniform(0, 2 * np.pi, n_ch), 0.0)
                sig = amps[k] * np.cos(2 * np.pi * freqs[k] * t[:, None] + phase)
                chunks.append(sig)
                labels.append(np.full(length, k, dtype=np.int64))
                t0 += length
            values = np.concatenate(chunks) + offsets[subj]
            if config.noise_std > 0:
                values = values + rng.normal(0.0, config.noise_std, size=values.shape)
            sessions.append(Session(
                f"s{subj:02d}", f"s{subj:02d}_r{sess}", rate,
                np.arange(t0) / rate, values, np.concatenate(labels),
            ))
    return SessionSet(sessions, n_ch, config.class_names)
