"""Central finite-difference check of the analytic joint-loss gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autoencoder import (
    MODES,
    backward,
    forward,
    init_network,
    loss_ae,
    loss_joint,
    loss_lp,
    loss_tc,
    mode_weights,
    neighbour_targets,
)
from .neighbors import NeighborhoodIndex

DEFAULT_SHAPES = ([14, 8, 4], [6, 4, 2], [10, 6, 3], [8, 5], [12, 9, 6, 3])
REL_TOL = 1e-5
ABS_FLOOR = 1e-8
STEP = 1e-5


def reference_loss(params, x, neighborhoods, rows, alpha, beta) -> float:
    """Batch-mean joint loss evaluated sample by sample from the loss definitions."""
    total = 0.0
    for i in rows:
        _, rec = forward(params, x[i])
        ae = loss_ae(x[i], rec)
        t = neighborhoods.temporal[i]
        f = neighborhoods.feature[i]
        tc = loss_tc(rec, x[t]) if len(t) else ae
        lp = loss_lp(rec, x[f]) if len(f) else ae
        total += loss_joint((ae, tc, lp), alpha, beta)
    return total / len(rows)


def finite_difference(params, x, neighborhoods, rows, alpha, beta, step=STEP):
    grads = []
    for arr in params.flat():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + step
            up = reference_loss(params, x, neighborhoods, rows, alpha, beta)
            arr[idx] = orig - step
            down = reference_loss(params, x, neighborhoods, rows, alpha, beta)
            arr[idx] = orig
            g[idx] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def random_neighborhoods(rng, size, m=3, n=3):
    temporal, feature = [], []
    for i in range(size):
        others = np.delete(np.arange(size), i)
        # row 0 has no temporal neighbours to exercise the fallback
        tm = 0 if i == 0 else int(rng.integers(1, m + 1))
        temporal.append(np.sort(rng.choice(others, tm, replace=False)))
        feature.append(rng.choice(others, n, replace=False))
    return NeighborhoodIndex(temporal, feature, m, n)


@dataclass
class CheckResult:
    shape: list
    mode: str
    max_rel_error: float
    passed: bool


def compare(analytic, numeric):
    """Worst scaled error and the pass verdict.

    Each entry's error is |a - f| / max(|a|, |f|, ABS_FLOOR / REL_TOL), i.e. a
    relative error that switches to an absolute ABS_FLOOR test for
    near-zero gradients. The check passes when the worst value is <= REL_TOL.
    """
    worst = 0.0
    for a, f in zip(analytic, numeric):
        scale = np.maximum(np.maximum(np.abs(a), np.abs(f)), ABS_FLOOR / REL_TOL)
        worst = max(worst, float((np.abs(a - f) / scale).max(initial=0.0)))
    return worst, worst <= REL_TOL


def check_gradients(seed: int = 0, shapes=DEFAULT_SHAPES, samples: int = 8,
                    alpha: float = 0.3, beta: float = 0.25) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for shape in shapes:
        params = init_network(shape, 0.01, int(rng.integers(2**31)))
        for l in range(len(params.biases)):
            params.biases[l] = rng.normal(0, 0.1, params.biases[l].shape)
        x = rng.normal(size=(samples, shape[0]))
        nb = random_neighborhoods(rng, samples)
        targets = neighbour_targets(x, nb)
        rows = np.arange(samples)
        for mode in MODES:
            a, b = mode_weights(mode, alpha, beta)
            _, gw, gb = backward(params, x, targets, rows, a, b)
            numeric = finite_difference(params, x, nb, rows, a, b)
            worst, ok = compare(gw + gb, numeric)
            results.append(CheckResult(list(shape), mode, worst, ok))
    return results
