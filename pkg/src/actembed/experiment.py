"""Cross-validated clustering experiments and their CSV reports.

Sub-seeds come from a splitmix64 counter chain: ``derive_seed(master, stream,
fold, item)`` feeds master, then each counter, through splitmix64 (xor then
mix), so every (stream, fold, item) job owns an independent seed regardless
of execution order. Training seeds depend on the fold only (paired
comparison across modes); k-means seeds on fold, method and k offset.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .autoencoder import encode, train
from .baselines import pca_fit, pca_transform
from .cluster import dump_assignment, kmeans
from .config import ExperimentConfig, format_config
from .errors import ActEmbedError, DataError, EmptyReport, TooFewSessions
from .features import FeatureMatrix, apply_standardizer, build_feature_matrix, fit_standardizer
from .ingest import (
    MISSING_LABEL,
    generate_synthetic,
    load_canonical_csv,
    load_pamap2,
    segment_all,
)
from .metrics import acc, ari, contingency, nmi, write_confusion_csv
from .neighbors import build_neighborhoods, dump_neighborhoods

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
STREAM_SYNTH, STREAM_CV, STREAM_TRAIN, STREAM_KMEANS = 1, 2, 3, 4


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, *counters: int) -> int:
    state = splitmix64(master & MASK64)
    for c in counters:
        state = splitmix64(state ^ (c & MASK64))
    return state >> 1  # 63 bits


@dataclass
class Dataset:
    matrix: FeatureMatrix  # raw (unstandardized) features
    class_names: tuple
    skipped_sessions: list = field(default_factory=list)

    @property
    def n_classes(self):
        return len({int(v) for v in self.matrix.labels if v != MISSING_LABEL})


def load_sessions(cfg: ExperimentConfig):
    if cfg.source == "synthetic":
        sessions = generate_synthetic(cfg.synth, derive_seed(cfg.seed, STREAM_SYNTH))
    elif cfg.source == "csv":
        sessions = load_canonical_csv(cfg.path, sample_rate=cfg.sample_rate)
    else:
        sessions = load_pamap2(cfg.path, cfg.sample_rate or 100.0, cfg.max_gap_seconds)
    if cfg.channels:
        sessions = sessions.select_channels(cfg.channels)
    return sessions


def prepare_dataset(cfg: ExperimentConfig) -> Dataset:
    sessions = load_sessions(cfg)
    segments, skipped = segment_all(sessions, cfg.window_seconds, cfg.step_seconds)
    if not segments:
        raise DataError("no session is long enough for one window")
    return Dataset(build_feature_matrix(segments), sessions.class_names, skipped)


def crossval_split(session_keys, folds: int, seed: int):
    """Session-level folds: shuffle distinct sessions, deal them round-robin.

    ``session_keys`` holds one key per row. Returns a list of
    ``(train_rows, test_rows)`` index arrays.
    """
    if folds < 2:
        raise TooFewSessions("need at least two folds")
    order = list(dict.fromkeys(session_keys))
    if len(order) < folds:
        raise TooFewSessions(f"{len(order)} sessions cannot fill {folds} folds")
    perm = np.random.default_rng(seed).permutation(len(order))
    fold_of = {order[p]: pos % folds for pos, p in enumerate(perm)}
    assign = np.array([fold_of[k] for k in session_keys])
    return [(np.flatnonzero(assign != f), np.flatnonzero(assign == f)) for f in range(folds)]


@dataclass
class FoldData:
    train_rows: np.ndarray
    test_rows: np.ndarray
    standardizer: object
    train_matrix: FeatureMatrix  # standardized training rows
    neighborhoods: object


def prepare_fold(matrix: FeatureMatrix, train_rows, test_rows, m: int, n: int) -> FoldData:
    """Everything fitted on training rows only: z-scoring and neighbourhoods."""
    std = fit_standardizer(matrix, train_rows)
    train_matrix = apply_standardizer(std, matrix.take(train_rows))
    nb = build_neighborhoods(train_matrix, m, n)
    return FoldData(np.asarray(train_rows), np.asarray(test_rows), std, train_matrix, nb)


@dataclass
class RunRow:
    fold: int
    mode: str
    k: int
    acc: float
    ari: float
    nmi: float
    inertia: float
    epochs: int
    train_seconds: float = 0.0
    cluster_seconds: float = 0.0

    @property
    def run_id(self):
        return f"f{self.fold}-{self.mode}-k{self.k}"


@dataclass
class RunReport:
    rows: list
    class_names: tuple
    config: ExperimentConfig
    tables: dict = field(default_factory=dict)  # (mode, fold, k) -> ContingencyTable
    assignments: dict = field(default_factory=dict)  # (mode, fold, k) -> ClusterAssignment
    neighborhoods: dict = field(default_factory=dict)  # fold -> (index, train values)
    notes: list = field(default_factory=list)

    def aggregate(self):
        """Per (mode, k): fold count and population mean/std of acc, ari, nmi."""
        groups: dict[tuple, list] = {}
        for r in self.rows:
            groups.setdefault((r.mode, r.k), []).append(r)
        out = []
        for (mode, k), rows in groups.items():
            entry = {"mode": mode, "k": k, "folds": len(rows)}
            for metric in ("acc", "ari", "nmi"):
                vals = np.array([getattr(r, metric) for r in rows])
                entry[f"{metric}_mean"] = float(vals.mean())
                entry[f"{metric}_std"] = float(vals.std())
            out.append(entry)
        return out

    def mean(self, mode, metric="acc", k=None):
        vals = [getattr(r, metric) for r in self.rows if r.mode == mode and (k is None or r.k == k)]
        return float(np.mean(vals))


def _annotate(exc: Exception, **where):
    if isinstance(exc, ActEmbedError):
        exc.where = where
        exc.args = (f"[{', '.join(f'{k}={v}' for k, v in where.items())}] {exc}",) + exc.args[1:]
    return exc


def _embed(cfg, dataset, fold: int, fd: FoldData, method: str):
    """Fit one representation on the training rows and embed every row."""
    matrix = dataset.matrix
    if method == "PCA":
        d_out = min(cfg.encoder[-1], len(fd.train_rows), matrix.dim)
        model = pca_fit(fd.train_matrix, d_out, tol=1e-9)
        return pca_transform(model, fd.standardizer.apply(matrix.values)), 0
    # all autoencoder modes of a fold share initialization and batch order,
    # so differences between them come from the loss terms alone
    tcfg = dataclasses.replace(
        cfg.training, mode=method, seed=derive_seed(cfg.seed, STREAM_TRAIN, fold),
    )
    model = train(fd.train_matrix, fd.neighborhoods, tcfg, [matrix.dim, *cfg.encoder],
                  cfg.leaky_slope, fd.standardizer)
    return encode(model, matrix), model.stopped_epoch


def _run_job(cfg, dataset, fold, fd, method, tn):
    rows, tables, assigns = [], {}, {}
    t0 = time.perf_counter()
    try:
        emb, epochs = _embed(cfg, dataset, fold, fd, method)
    except ActEmbedError as exc:
        raise _annotate(exc, fold=fold, method=method) from exc
    train_seconds = time.perf_counter() - t0
    labels = dataset.matrix.labels
    score = np.arange(len(labels)) if cfg.score_all else fd.test_rows
    score = score[labels[score] != MISSING_LABEL]
    for offset in cfg.k_offsets:
        k = tn + offset
        t1 = time.perf_counter()
        try:
            seed = derive_seed(cfg.seed, STREAM_KMEANS, fold, cfg.methods.index(method), offset)
            model, assignment = kmeans(emb, k, cfg.kmeans_restarts, cfg.kmeans_max_iters,
                                       cfg.kmeans_tol, seed)
            table = contingency(assignment.labels[score], labels[score], k, len(dataset.class_names))
            row = RunRow(fold, method, k, acc(table), ari(table), nmi(table), model.inertia,
                         epochs, train_seconds, time.perf_counter() - t1)
        except ActEmbedError as exc:
            raise _annotate(exc, fold=fold, method=method, k=k) from exc
        rows.append(row)
        tables[(method, fold, k)] = table
        assigns[(method, fold, k)] = assignment
    return rows, tables, assigns


def worker_count(jobs: int) -> int:
    try:
        cap = int(os.environ.get("ACTEMBED_THREADS", "0"))
    except ValueError:
        cap = 0
    if cap <= 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, jobs))


def run_experiment(cfg: ExperimentConfig, dataset: Dataset | None = None) -> RunReport:
    cfg.validate(check_paths=True)
    dataset = dataset or prepare_dataset(cfg)
    matrix = dataset.matrix
    tn = dataset.n_classes
    if tn < 1:
        raise DataError("dataset has no labeled windows")
    splits = crossval_split(matrix.session_keys, cfg.folds, derive_seed(cfg.seed, STREAM_CV))
    report = RunReport([], dataset.class_names, cfg)
    for key in dataset.skipped_sessions:
        report.notes.append(f"session {key[0]}/{key[1]} shorter than one window; skipped")

    folds = []
    for f, (tr, te) in enumerate(splits):
        fd = prepare_fold(matrix, tr, te, cfg.m, cfg.n)
        empty = fd.neighborhoods.empty_temporal_rows
        if empty:
            report.notes.append(f"fold {f}: {len(empty)} training rows without temporal neighbours")
        report.neighborhoods[f] = (fd.neighborhoods, fd.train_matrix.values)
        folds.append(fd)

    jobs = [(f, fd, method) for f, fd in enumerate(folds) for method in cfg.methods]
    workers = worker_count(len(jobs))
    if workers == 1:
        results = [_run_job(cfg, dataset, f, fd, m, tn) for f, fd, m in jobs]
    else:
        with ThreadPoolExecutor(workers) as pool:
            futures = [pool.submit(_run_job, cfg, dataset, f, fd, m, tn) for f, fd, m in jobs]
            results = [fut.result() for fut in futures]
    for rows, tables, assigns in results:
        report.rows.extend(rows)
        report.tables.update(tables)
        report.assignments.update(assigns)
    method_pos = {m: i for i, m in enumerate(cfg.methods)}
    report.rows.sort(key=lambda r: (r.fold, method_pos[r.mode], r.k))
    return report


def _fmt(v):
    return repr(float(v))


def emit_report(report: RunReport, outdir, dump: bool = False) -> list[Path]:
    """Write runs.csv, aggregate.csv, timings.csv, confusion matrices and the manifest.

    Wall-clock timings go to timings.csv so that runs.csv is reproducible
    byte for byte.
    """
    if not report.rows:
        raise EmptyReport("refusing to write an empty report")
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {out}: {exc}") from None
    written = []

    def writer(name):
        path = out / name
        written.append(path)
        fh = open(path, "w", newline="", encoding="utf-8")
        return fh, csv.writer(fh, lineterminator="\n")

    fh, w = writer("runs.csv")
    with fh:
        w.writerow(["run_id", "fold", "mode", "k", "acc", "ari", "nmi", "inertia", "epochs"])
        for r in report.rows:
            w.writerow([r.run_id, r.fold, r.mode, r.k, _fmt(r.acc), _fmt(r.ari), _fmt(r.nmi),
                        _fmt(r.inertia), r.epochs])

    fh, w = writer("aggregate.csv")
    with fh:
        w.writerow(["mode", "k", "folds", "acc_mean", "acc_std", "ari_mean", "ari_std",
                    "nmi_mean", "nmi_std"])
        for a in report.aggregate():
            w.writerow([a["mode"], a["k"], a["folds"]]
                       + [_fmt(a[f"{m}_{s}"]) for m in ("acc", "ari", "nmi") for s in ("mean", "std")])

    fh, w = writer("timings.csv")
    with fh:
        w.writerow(["run_id", "train_seconds", "cluster_seconds"])
        for r in report.rows:
            w.writerow([r.run_id, f"{r.train_seconds:.3f}", f"{r.cluster_seconds:.3f}"])

    for (mode, fold, k), table in sorted(report.tables.items(), key=lambda kv: (kv[0][1], kv[0][0], kv[0][2])):
        path = out / f"confusion_{mode}_{fold}_{k}.csv"
        write_confusion_csv(table, report.class_names, path)
        written.append(path)

    if dump:
        for (mode, fold, k), assignment in report.assignments.items():
            path = out / f"assignment_{mode}_{fold}_{k}.csv"
            dump_assignment(assignment, path)
            written.append(path)
        for fold, (index, values) in report.neighborhoods.items():
            path = out / f"neighbors_{fold}.csv"
            dump_neighborhoods(index, values, path)
            written.append(path)

    manifest = out / "run_manifest.ini"
    header = [f"# actembed {__version__}", f"# seed = {report.config.seed}"]
    header += [f"# note: {n}" for n in report.notes]
    manifest.write_text("\n".join(header) + "\n" + format_config(report.config), encoding="utf-8")
    written.append(manifest)
    return written


def sweep_alpha_beta(cfg: ExperimentConfig, alphas, betas, outdir, dataset=None):
    """Run the experiment for every (alpha, beta) with alpha + beta <= 1.

    Each run lands in ``outdir/a<alpha>_b<beta>/``; ``sweep.csv`` lists
    aggregate scores per grid point, mode and k.
    """
    dataset = dataset or prepare_dataset(cfg)
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for a in alphas:
        for b in betas:
            if a + b > 1 + 1e-12:
                continue
            sub = dataclasses.replace(cfg, training=dataclasses.replace(cfg.training, alpha=a, beta=b))
            report = run_experiment(sub, dataset)
            emit_report(report, out / f"a{a}_b{b}")
            for agg in report.aggregate():
                lines.append((a, b, agg))
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "beta", "mode", "k", "acc_mean", "ari_mean", "nmi_mean"])
        for a, b, agg in lines:
            w.writerow([a, b, agg["mode"], agg["k"], _fmt(agg["acc_mean"]),
                        _fmt(agg["ari_mean"]), _fmt(agg["nmi_mean"])])
    return lines
