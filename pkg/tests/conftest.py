import numpy as np
import pytest
from hypothesis import settings

from actembed.features import FeatureMatrix
from actembed.ingest import Session, SynthConfig

# fixed example streams keep the recorded test log reproducible
settings.register_profile("repro", derandomize=True)
settings.load_profile("repro")


def make_matrix(values, sessions=None, labels=None):
    """FeatureMatrix with one subject per session and segment indices 0.. per session."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    s = len(values)
    sessions = ["a"] * s if sessions is None else list(sessions)
    labels = [0] * s if labels is None else list(labels)
    seen = {}
    seg = []
    for key in sessions:
        seg.append(seen.get(key, 0))
        seen[key] = seg[-1] + 1
    return FeatureMatrix(values, labels, [f"subj_{k}" for k in sessions], sessions, seg)


def make_session(values, labels=None, rate=1.0, subject="s1", session="r1"):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    n = len(values)
    labels = np.zeros(n, dtype=np.int64) if labels is None else labels
    return Session(subject, session, rate, np.arange(n) / rate, values, labels)


@pytest.fixture
def small_synth():
    return SynthConfig(
        class_names=("walk", "run", "rest"),
        amplitudes=((1.0, 0.5), (2.0, 1.0), (0.1, 0.1)),
        frequencies=((2.0, 1.0), (3.0, 2.0), (0.0, 0.0)),
        subjects=2, sessions_per_subject=1, bouts_per_session=3,
        min_bout_seconds=10, max_bout_seconds=10, sample_rate=10,
        subject_offsets=((0.0, 0.0), (0.1, -0.1)),
    )


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        parts = results[n]
        if all(status == "SKIP" for status, _ in parts):
            verdict = "SKIP"
        else:
            verdict = "PASS" if all(status in ("PASS", "SKIP") for status, _ in parts) else "FAIL"
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {n}: {verdict}  {detail}")
