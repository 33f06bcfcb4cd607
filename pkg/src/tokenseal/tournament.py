"""Multi-layer tournament sampling baseline and its frequentist Z-test.

Each layer assigns every candidate a keyed binary g-value and reshapes
the distribution by the two-sample tournament update

    p'_v = p_v * (1 + g_v - sum_w p_w g_w),

which is the exact win probability when two candidates are drawn from p
and the higher g wins (first drawn wins ties).  Its mean over g is p_v,
so each layer preserves single-token non-distortion; the Monte Carlo
oracle in the tests verifies this rather than assuming it.  The final
token is a true-random draw from the reshaped distribution.

Detection sums linearly-decaying layer weights over recomputed g-values
and compares against the analytic Bernoulli(1/2) null (a plain Z-test:
calibrated false positive rates, unlike posterior classifiers).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import prf
from .sampling import ProbVector
from .stats import log10_normal_sf


def linear_weights(depth: int) -> tuple[float, ...]:
    return tuple((depth - l + 1) / depth for l in range(1, depth + 1))


@dataclass(frozen=True)
class TournamentConfig:
    key: int
    depth: int = 10
    k: int = 3
    layer_weights: tuple[float, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.layer_weights is None:
            object.__setattr__(self, "layer_weights", linear_weights(self.depth))
        w = np.asarray(self.layer_weights, dtype=np.float64)
        if w.size != self.depth:
            raise ValueError("need one weight per layer")
        if np.any(np.diff(w) > 0) or np.any(w < 0) or not np.any(w > 0):
            raise ValueError("weights must be non-increasing, non-negative, not all zero")


def g_values(token: int, window, key: int, depth: int) -> np.ndarray:
    """Binary g-value per layer for one (token, window)."""
    out = np.empty(depth, dtype=np.int8)
    for l in range(1, depth + 1):
        out[l - 1] = prf.prf_uniform(token, window, prf.layer_key(key, l)) < 0.5
    return out


def _g_matrix(candidates: np.ndarray, window, key: int, depth: int) -> np.ndarray:
    """(depth, n_candidates) binary matrix."""
    rows = [prf.prf_vector(candidates, window, prf.layer_key(key, l)) < 0.5
            for l in range(1, depth + 1)]
    return np.asarray(rows, dtype=np.float64)


def reshape_layer(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    """One tournament round: boost g=1 mass by the two-sample win rule."""
    return p * (1.0 + g - float(np.dot(p, g)))


def tournament_sample(probs: ProbVector, window, config: TournamentConfig,
                      rng: np.random.Generator) -> int:
    """Reshape over all layers, then draw true-randomly."""
    g = _g_matrix(np.asarray(probs.ids), window, config.key, config.depth)
    p = probs.probs.copy()
    for l in range(config.depth):
        p = reshape_layer(p, g[l])
    p = np.maximum(p, 0)
    p /= p.sum()
    idx = int(np.searchsorted(np.cumsum(p), rng.random()))
    return int(probs.ids[min(idx, len(probs) - 1)])


def tournament_sample_batch(probs: ProbVector, window, keys: np.ndarray,
                            config: TournamentConfig,
                            rng: np.random.Generator) -> np.ndarray:
    """Vectorized tournament step across many keys (Monte Carlo oracle)."""
    n = len(keys)
    P = np.tile(probs.probs, (n, 1))
    for l in range(1, config.depth + 1):
        layer_keys = np.array([prf.layer_key(int(k), l) for k in keys], dtype=np.uint64)
        G = (prf.prf_matrix(probs.ids, window, layer_keys, config.k) < 0.5).astype(np.float64)
        P = P * (1.0 + G - np.sum(P * G, axis=1, keepdims=True))
    P = np.maximum(P, 0)
    P /= P.sum(axis=1, keepdims=True)
    u = rng.random((n, 1))
    cols = (np.cumsum(P, axis=1) < u).sum(axis=1)
    cols = np.minimum(cols, len(probs) - 1)
    return np.asarray(probs.ids)[cols]


def score_g_values(tokens, config: TournamentConfig) -> np.ndarray:
    """(depth, n) g-values of each position's own token; NaN below warm-up."""
    rows = [prf.sliding_uniform(tokens, config.k, prf.layer_key(config.key, l))
            for l in range(1, config.depth + 1)]
    return np.asarray(rows) < 0.5


def synthid_detect(tokens, config: TournamentConfig,
                   valid: np.ndarray | None = None) -> tuple[float, float, float, int]:
    """Weighted-mean Z-test over tournament g-values.

    Returns (z, p, log10_p, n_valid).  ``valid`` is the deduplicated
    position mask; by default every position with a full window counts.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    n = tokens.size
    if valid is None:
        valid = np.zeros(n, dtype=bool)
        valid[config.k:] = True
    n_valid = int(valid.sum())
    if n_valid < 1:
        raise ValueError("no scoreable tokens after warm-up and deduplication")
    g = score_g_values(tokens, config)[:, valid]
    w = np.asarray(config.layer_weights, dtype=np.float64)
    s = w @ g
    mu0 = 0.5 * w.sum()
    sigma0 = 0.5 * np.sqrt(np.sum(w * w))
    S = float(s.sum())
    z = (S - n_valid * mu0) / (sigma0 * np.sqrt(n_valid))
    log10_p = log10_normal_sf(z)
    return z, float(10.0 ** max(log10_p, -300.0)), log10_p, n_valid
