"""Fully connected LeakyReLU autoencoder trained on the joint objective.

The objective for sample i with reconstruction r_i is

    (1 - a - b) * |x_i - r_i|^2
    + a * mean_{j in temporal(i)} |x_j - r_i|^2
    + b * mean_{k in feature(i)} |x_k - r_i|^2

averaged over a mini-batch. All three terms share r_i, so only the output
error signal differs from a plain autoencoder.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    Diverged,
    DimMismatch,
    EmptyBatch,
    InvalidConfig,
    InvalidShape,
)
from .features import Standardizer

MODES = ("AE_ONLY", "TC_AE", "LP_AE", "JOINT")
CHECKPOINT_MAGIC = "ACTEMBED1"
IMPROVEMENT_EPS = 1e-6


@dataclass(eq=False)
class MlpParams:
    layer_sizes: list  # encoder sizes [D, h1, ..., hk]; decoder mirrors them
    weights: list  # [out x in] per layer, encoder layers first
    biases: list
    leaky_slope: float = 0.01

    @property
    def full_sizes(self):
        return list(self.layer_sizes) + list(self.layer_sizes[-2::-1])

    @property
    def n_encoder(self):
        return len(self.layer_sizes) - 1

    def copy(self) -> MlpParams:
        return MlpParams(list(self.layer_sizes), [w.copy() for w in self.weights],
                         [b.copy() for b in self.biases], self.leaky_slope)

    def flat(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def check(self):
        sizes = self.full_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise InvalidShape("layer count does not match layer_sizes")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise InvalidShape(f"layer {l}: weight {w.shape}, bias {b.shape}")


def init_network(layer_sizes, leaky_slope: float = 0.01, seed: int = 0) -> MlpParams:
    """Uniform(-h, h) weights with h = 0.5 * sqrt(6 / fan_in); zero biases."""
    layer_sizes = [int(s) for s in layer_sizes]
    if len(layer_sizes) < 2 or any(s < 1 for s in layer_sizes):
        raise InvalidShape(f"invalid layer sizes {layer_sizes}")
    rng = np.random.default_rng(seed)
    sizes = layer_sizes + layer_sizes[-2::-1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        h = 0.5 * math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-h, h, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(layer_sizes, weights, biases, float(leaky_slope))


def leaky_relu(z, slope):
    return np.where(z >= 0, z, slope * z)


def forward_batch(params: MlpParams, x):
    """Returns (activations, pre-activations); activations[0] is the input."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.layer_sizes[0]:
        raise DimMismatch(f"input has {x.shape[-1]} dims, network expects {params.layer_sizes[0]}")
    acts, pres = [x], []
    last = len(params.weights) - 1
    a = x
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        pres.append(z)
        a = z if l == last else leaky_relu(z, params.leaky_slope)
        acts.append(a)
    return acts, pres


def forward(params: MlpParams, x):
    """(embedding, reconstruction) for one vector or a batch of rows."""
    acts, _ = forward_batch(params, x)
    return acts[params.n_encoder], acts[-1]


def _sq(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"shapes {a.shape} and {b.shape} differ")
    d = a - b
    return float(d @ d)


def loss_ae(x, reconstruction) -> float:
    return _sq(x, reconstruction)


def _neighbour_loss(x_tilde, neighbour_rows):
    rows = [np.asarray(r, dtype=np.float64) for r in neighbour_rows]
    if not rows:
        raise ValueError("neighbour list is empty")
    return sum(_sq(r, x_tilde) for r in rows) / len(rows)


def loss_tc(x_tilde, temporal_neighbor_rows) -> float:
    return _neighbour_loss(x_tilde, temporal_neighbor_rows)


def loss_lp(x_tilde, feature_neighbor_rows) -> float:
    return _neighbour_loss(x_tilde, feature_neighbor_rows)


def check_weights(alpha, beta):
    if alpha < 0 or beta < 0 or alpha + beta > 1 + 1e-12:
        raise InvalidConfig(
            f"need alpha >= 0, beta >= 0 and alpha + beta <= 1 (got {alpha}, {beta})"
        )


def loss_joint(sample_losses, alpha, beta) -> float:
    check_weights(alpha, beta)
    ae, tc, lp = sample_losses
    return (1.0 - alpha - beta) * ae + alpha * tc + beta * lp


def mode_weights(mode: str, alpha: float, beta: float) -> tuple[float, float]:
    """Effective (alpha, beta) for a training mode."""
    if mode == "AE_ONLY":
        return 0.0, 0.0
    if mode == "TC_AE":
        return alpha, 0.0
    if mode == "LP_AE":
        return 0.0, beta
    if mode == "JOINT":
        return alpha, beta
    raise InvalidConfig(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")


@dataclass(frozen=True)
class NeighbourTargets:
    """Per-row neighbour means and spreads.

    mean_j |x_j - r|^2 = |mu - r|^2 + mean_j |x_j - mu|^2, so each auxiliary
    loss is a squared distance to ``mu`` plus a constant ``spread``. Rows
    without neighbours use the row itself (the term falls back to the
    reconstruction loss).
    """

    mu_t: np.ndarray
    spread_t: np.ndarray
    mu_f: np.ndarray
    spread_f: np.ndarray


def _means(x, lists):
    mu = np.array(x, copy=True)
    spread = np.zeros(len(x))
    for i, idx in enumerate(lists):
        if len(idx) == 0:
            continue
        nb = x[np.asarray(idx, dtype=np.int64)]
        mu[i] = nb.mean(axis=0)
        d = nb - mu[i]
        spread[i] = np.einsum("ij,ij->", d, d) / len(idx)
    return mu, spread


def neighbour_targets(x, neighborhoods) -> NeighbourTargets:
    x = np.asarray(x, dtype=np.float64)
    mu_t, st = _means(x, neighborhoods.temporal)
    mu_f, sf = _means(x, neighborhoods.feature)
    return NeighbourTargets(mu_t, st, mu_f, sf)


def batch_loss(params, x, targets: NeighbourTargets, rows, alpha, beta) -> float:
    """Mean joint loss over ``rows``."""
    rows = np.asarray(rows, dtype=np.int64)
    _, rec = forward(params, x[rows])
    return _joint_from_rec(rec, x[rows], targets, rows, alpha, beta).mean()


def _joint_from_rec(rec, xb, t, rows, alpha, beta):
    ae = np.sum((rec - xb) ** 2, axis=1)
    tc = np.sum((rec - t.mu_t[rows]) ** 2, axis=1) + t.spread_t[rows]
    lp = np.sum((rec - t.mu_f[rows]) ** 2, axis=1) + t.spread_f[rows]
    return (1.0 - alpha - beta) * ae + alpha * tc + beta * lp


def backward(params: MlpParams, x, targets: NeighbourTargets, rows, alpha, beta):
    """Gradient of the batch-mean joint loss.

    Returns ``(loss, grad_weights, grad_biases)``.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if len(rows) == 0:
        raise EmptyBatch("empty batch")
    xb = x[rows]
    acts, pres = forward_batch(params, xb)
    rec = acts[-1]
    loss = _joint_from_rec(rec, xb, targets, rows, alpha, beta).mean()
    b = len(rows)
    delta = (2.0 / b) * (
        (1.0 - alpha - beta) * (rec - xb)
        + alpha * (rec - targets.mu_t[rows])
        + beta * (rec - targets.mu_f[rows])
    )
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for l in range(len(params.weights) - 1, -1, -1):
        gw[l] = delta.T @ acts[l]
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l]) * np.where(pres[l - 1] >= 0, 1.0, params.leaky_slope)
    return float(loss), gw, gb


@dataclass
class TrainingConfig:
    alpha: float = 0.3
    beta: float = 0.3
    learning_rate: float = 0.01
    batch_size: int = 32
    max_epochs: int = 500
    patience: int = 10
    val_fraction: float = 0.15
    seed: int = 0
    mode: str = "JOINT"

    def validate(self):
        check_weights(self.alpha, self.beta)
        if self.mode not in MODES:
            raise InvalidConfig(f"unknown mode {self.mode!r}")
        if not self.learning_rate >= 0:
            raise InvalidConfig("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise InvalidConfig("max_epochs must be >= 0")
        if self.patience < 1:
            raise InvalidConfig("patience must be >= 1")
        if not 0 < self.val_fraction < 1:
            raise InvalidConfig("val_fraction must lie in (0, 1)")
        return self


@dataclass(eq=False)
class TrainedModel:
    params: MlpParams
    standardizer: Standardizer | None
    history: list = field(default_factory=list)  # (epoch, train_loss, val_loss)
    stopped_epoch: int = 0
    best_epoch: int = 0
    config: TrainingConfig | None = None


def session_split(keys, val_fraction, rng):
    """Assign whole sessions to validation until it holds val_fraction of rows.

    With a single session there is nothing to hold out; training rows double
    as validation rows.
    """
    order, counts = [], {}
    for k in keys:
        if k not in counts:
            order.append(k)
            counts[k] = 0
        counts[k] += 1
    total = len(keys)
    if len(order) < 2:
        rows = np.arange(total)
        return rows, rows
    val = set()
    n_val = 0
    for p in rng.permutation(len(order)):
        if n_val >= val_fraction * total or len(val) == len(order) - 1:
            break
        val.add(order[p])
        n_val += counts[order[p]]
    is_val = np.array([k in val for k in keys])
    return np.flatnonzero(~is_val), np.flatnonzero(is_val)


def train(matrix, neighborhoods, config: TrainingConfig, layer_sizes,
          leaky_slope: float = 0.01, standardizer: Standardizer | None = None) -> TrainedModel:
    """Mini-batch SGD on the joint loss with early stopping on validation loss.

    ``matrix`` must already be standardized; ``neighborhoods`` index its rows.
    The best-validation parameters are returned.
    """
    config.validate()
    x = np.asarray(matrix.values, dtype=np.float64)
    if len(x) == 0:
        raise EmptyBatch("no training rows")
    layer_sizes = list(layer_sizes)
    if layer_sizes[0] != x.shape[1]:
        raise DimMismatch(f"network input {layer_sizes[0]} != feature dim {x.shape[1]}")
    alpha, beta = mode_weights(config.mode, config.alpha, config.beta)
    ss = np.random.SeedSequence(config.seed)
    init_seed, split_seed, shuffle_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    params = init_network(layer_sizes, leaky_slope, init_seed)
    train_rows, val_rows = session_split(matrix.session_keys, config.val_fraction,
                                         np.random.default_rng(split_seed))
    targets = neighbour_targets(x, neighborhoods)
    rng = np.random.default_rng(shuffle_seed)
    lr = config.learning_rate

    def evaluate(epoch):
        with np.errstate(over="ignore", invalid="ignore"):
            tr = batch_loss(params, x, targets, train_rows, alpha, beta)
            va = batch_loss(params, x, targets, val_rows, alpha, beta)
        if not (math.isfinite(tr) and math.isfinite(va)):
            raise Diverged(epoch, lr)
        return float(tr), float(va)

    tr, va = evaluate(0)
    history = [(0, tr, va)]
    best, best_params, best_epoch, wait = va, params.copy(), 0, 0
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        perm = train_rows[rng.permutation(len(train_rows))]
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, len(perm), config.batch_size):
                _, gw, gb = backward(params, x, targets, perm[start:start + config.batch_size],
                                     alpha, beta)
                for l in range(len(gw)):
                    params.weights[l] -= lr * gw[l]
                    params.biases[l] -= lr * gb[l]
        tr, va = evaluate(epoch)
        history.append((epoch, tr, va))
        if va < best - IMPROVEMENT_EPS:
            best, best_params, best_epoch, wait = va, params.copy(), epoch, 0
        else:
            wait += 1
            if wait >= config.patience:
                break
    return TrainedModel(best_params, standardizer, history, epoch, best_epoch, config)


def encode(model: TrainedModel, matrix) -> np.ndarray:
    """Embeddings of every row; raw features are standardized with the model's standardizer."""
    x = np.asarray(getattr(matrix, "values", matrix), dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.params.layer_sizes[0]:
        raise DimMismatch(f"expected rows of {model.params.layer_sizes[0]} features")
    if model.standardizer is not None:
        x = model.standardizer.apply(x)
    emb, _ = forward(model.params, x)
    return emb


def save_model(model: TrainedModel, path) -> None:
    p = model.params
    body = {
        "layer_sizes": p.layer_sizes,
        "leaky_slope": p.leaky_slope,
        "weights": [w.tolist() for w in p.weights],
        "biases": [b.tolist() for b in p.biases],
        "standardizer": None if model.standardizer is None else {
            "mean": model.standardizer.mean.tolist(),
            "std": model.standardizer.std.tolist(),
        },
        "config": None if model.config is None else asdict(model.config),
        "history": model.history,
        "stopped_epoch": model.stopped_epoch,
        "best_epoch": model.best_epoch,
    }
    Path(path).write_text(CHECKPOINT_MAGIC + "\n" + json.dumps(body) + "\n", encoding="utf-8")


def load_model(path) -> TrainedModel:
    text = Path(path).read_text(encoding="utf-8")
    magic, _, payload = text.partition("\n")
    if magic != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not an {CHECKPOINT_MAGIC} checkpoint")
    body = json.loads(payload)
    params = MlpParams(body["layer_sizes"], [np.array(w, dtype=np.float64) for w in body["weights"]],
                       [np.array(b, dtype=np.float64) for b in body["biases"]], body["leaky_slope"])
    params.check()
    std = body["standardizer"]
    return TrainedModel(
        params,
        None if std is None else Standardizer(np.array(std["mean"]), np.array(std["std"])),
        [tuple(h) for h in body["history"]],
        body["stopped_epoch"],
        body["best_epoch"],
        None if body["config"] is None else TrainingConfig(**body["config"]),
    )
