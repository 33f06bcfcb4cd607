"""Global watermark detection with calibrated p-values.

Pipeline: deduplicate (window, token) tuples -> per-token scores under
one or both keys -> optional entropy weights from a proxy model ->
weighted-score tail probability.  Scores are s = -ln(1 - u); under both
keys they fuse per token as s = (1-alpha)*s1 + alpha*s2 before a single
test statistic is formed (per-key p-value combination is strictly weaker,
see the power harness).

All p-values are log10; positions inside the first k tokens or killed by
deduplication contribute nothing, including to the weight sums.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import prf
from .stats import WeightedTail, gamma_pvalue, weighted_gamma_log10_sf
from .tournament import TournamentConfig, synthid_detect

__all__ = [
    "DetectConfig", "DetectionVerdict", "ScoreSeries",
    "dedup_mask", "score_tokens", "entropy_weights", "weighted_gamma_pvalue",
    "detect", "gamma_pvalue",
]


@dataclass(frozen=True)
class DetectConfig:
    """Detector options; ``alpha=0.5`` is the robust default when the
    generation-time routing ratio is unknown."""

    keys: tuple[int, ...]
    k: int = 3
    alpha: float = 0.5
    weighting: str = "uniform"  # "uniform" | "entropy"
    method: str = "textseal"    # "textseal" | "synthid"
    depth: int = 10             # synthid only
    threshold_log10p: float = -4.0

    def __post_init__(self):
        if len(self.keys) == 0:
            raise ValueError("need at least one key")
        if not 0.0 <= self.alpha <= 0.5:
            raise ValueError("alpha must be in [0, 0.5]")
        if self.weighting not in ("uniform", "entropy"):
            raise ValueError("weighting must be 'uniform' or 'entropy'")
        if self.method not in ("textseal", "synthid"):
            raise ValueError("method must be 'textseal' or 'synthid'")
        if len(self.keys) == 1 and self.alpha != 0.0:
            object.__setattr__(self, "alpha", 0.0)


@dataclass
class ScoreSeries:
    """Per-token scores, weights and validity after deduplication."""

    s1: np.ndarray
    s2: np.ndarray
    fused: np.ndarray
    valid: np.ndarray
    weights: np.ndarray
    entropies: np.ndarray | None
    k: int
    alpha: float

    @property
    def theta_r(self) -> float:
        return self.alpha**2 + (1.0 - self.alpha) ** 2

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def __len__(self) -> int:
        return int(self.fused.size)


@dataclass(frozen=True)
class DetectionVerdict:
    statistic: float
    log10_p: float
    n_valid: int
    k_new: float
    theta_new: float
    method: str

    @property
    def pvalue(self) -> float:
        return float(10.0 ** max(self.log10_p, -300.0))


def dedup_mask(tokens: Sequence[int] | np.ndarray, k: int) -> np.ndarray:
    """True where a position's (window, token) tuple occurs for the first
    time; the first k positions are always False."""
    x = np.ascontiguousarray(tokens, dtype=np.int64)
    n = x.size
    mask = np.zeros(n, dtype=bool)
    if n <= k:
        return mask
    tuples = np.lib.stride_tricks.sliding_window_view(x, k + 1)
    view = np.ascontiguousarray(tuples).view([("", np.int64)] * (k + 1)).ravel()
    _, first = np.unique(view, return_index=True)
    mask[first + k] = True
    return mask


def score_tokens(tokens: Sequence[int] | np.ndarray, keys: Sequence[int], k: int,
                 alpha: float = 0.0) -> ScoreSeries:
    """Per-position scores under one or two keys, fused with (1-alpha, alpha)."""
    x = np.ascontiguousarray(tokens, dtype=np.int64)
    if x.size <= k:
        raise ValueError(f"need more than k={k} tokens, got {x.size}")
    if len(keys) == 1:
        alpha = 0.0
    u1 = prf.sliding_uniform(x, k, keys[0])
    s1 = -np.log1p(-np.where(np.isnan(u1), 0.0, u1))
    if len(keys) >= 2:
        u2 = prf.sliding_uniform(x, k, keys[1])
        s2 = -np.log1p(-np.where(np.isnan(u2), 0.0, u2))
    else:
        s2 = np.zeros_like(s1)
    fused = (1.0 - alpha) * s1 + alpha * s2
    valid = dedup_mask(x, k)
    return ScoreSeries(s1=s1, s2=s2, fused=fused, valid=valid,
                       weights=np.ones_like(s1), entropies=None, k=k, alpha=alpha)


def entropy_weights(entropies: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Min-max anchored weights w = 0.1 + 0.9 * (H - Hmin)/(Hmax - Hmin).

    Extrema are taken over valid positions only; a (near-)constant
    entropy profile yields uniform weights of 1.
    """
    h = np.asarray(entropies, dtype=np.float64)
    if not np.all(np.isfinite(h[valid] if valid is not None else h)):
        raise ValueError("entropies must be finite")
    sel = h[valid] if valid is not None else h
    h_min, h_max = float(sel.min()), float(sel.max())
    if h_max - h_min < 1e-9:
        return np.ones_like(h)
    return 0.1 + 0.9 * (h - h_min) / (h_max - h_min)


def attach_entropy_weights(series: ScoreSeries, entropies: np.ndarray) -> ScoreSeries:
    h = np.asarray(entropies, dtype=np.float64)
    if h.size != len(series):
        raise ValueError("entropy array must align with the token sequence")
    series.entropies = h
    series.weights = entropy_weights(h, series.valid)
    return series


def weighted_gamma_pvalue(series: ScoreSeries) -> DetectionVerdict:
    """Tail probability of S = sum over valid positions of w_i * fused_i."""
    if series.n_valid < 1:
        raise ValueError("no valid tokens to score")
    w = series.weights[series.valid]
    s = series.fused[series.valid]
    S = float(np.dot(w, s))
    tail: WeightedTail = weighted_gamma_log10_sf(S, w, series.theta_r, series.alpha)
    return DetectionVerdict(statistic=S, log10_p=tail.log10_p, n_valid=series.n_valid,
                            k_new=tail.k_new, theta_new=tail.theta_new,
                            method=f"textseal-{tail.method}")


def proxy_entropies(tokens: Sequence[int], compiled, k: int) -> np.ndarray:
    """Per-position entropies from a proxy model's forward pass.

    The proxy's context order must not exceed k so every scoreable
    position has enough history.
    """
    if compiled.order > k:
        raise ValueError("proxy model order must be <= watermark context k")
    cache = getattr(compiled, "_entropy_memo", None)
    if cache is None:
        cache = compiled._entropy_memo = {}
    order = compiled.order
    x = tuple(int(t) for t in tokens)
    h = np.zeros(len(x))
    entropy_at = compiled.entropy_at
    for t in range(order, len(x)):
        ctx = x[t - order : t]
        val = cache.get(ctx)
        if val is None:
            val = cache[ctx] = entropy_at(ctx)
        h[t] = val
    return h


def detect(tokens: Sequence[int] | np.ndarray, config: DetectConfig,
           proxy=None, entropies: np.ndarray | None = None) -> DetectionVerdict:
    """Full detection pipeline: dedup -> scores -> weights -> p-value."""
    x = np.ascontiguousarray(tokens, dtype=np.int64)
    if x.size == 0:
        raise ValueError("empty token sequence")
    if config.method == "synthid":
        tcfg = TournamentConfig(key=config.keys[0], depth=config.depth, k=config.k)
        z, _, log10_p, n_valid = synthid_detect(x, tcfg, valid=dedup_mask(x, config.k))
        return DetectionVerdict(statistic=z, log10_p=log10_p, n_valid=n_valid,
                                k_new=float("nan"), theta_new=float("nan"),
                                method="synthid-z")
    series = score_tokens(x, config.keys, config.k, config.alpha)
    if config.weighting == "entropy":
        if entropies is None:
            if proxy is None:
                raise ValueError("entropy weighting needs a proxy model or entropies")
            entropies = proxy_entropies(x, proxy, config.k)
        attach_entropy_weights(series, entropies)
    return weighted_gamma_pvalue(series)
