"""Multi-region watermark localization within mixed documents.

The candidate set is a dyadic geometric cover: window lengths L0, 2*L0,
4*L0, ... slid at half-length strides, so any inserted region of length
>= L_min is at least half covered by some window while the total number
of windows stays ~4n/L0.  Greedy extraction ranks windows cheaply via
prefix sums, exactly scores only the best few, and keeps adding disjoint
regions while the Bonferroni-corrected pooled significance improves.

The ensemble reports min(global, best-single-window + log10(M),
multi-region + log10 C(M,y) + log10(Ymax)) + log10(3); each path's
correction makes the family-wise error rate a union bound, so the final
score stays an honest p-value no matter how the document was edited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detect import ScoreSeries
from .stats import log10_binom, moment_matched_log10_sf

LOG10_3 = math.log10(3.0)


@dataclass(frozen=True)
class WindowGrid:
    windows: tuple[tuple[int, int], ...]  # (start, length)
    L0: int
    n: int

    @property
    def M(self) -> int:
        return len(self.windows)


@dataclass(frozen=True)
class Region:
    start: int
    end: int  # exclusive
    log10_p_raw: float
    log10_p_corrected: float

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError("region must be non-empty")


@dataclass(frozen=True)
class EnsembleVerdict:
    log10_p_global: float
    log10_p_single: float
    log10_p_multi: float
    log10_p_final: float
    regions: tuple[Region, ...]
    path_chosen: str
    n: int

    @property
    def y(self) -> int:
        return len(self.regions)


@dataclass(frozen=True)
class LocalizeConfig:
    L_min: int = 50
    Y_max: int = 5
    top_c: int = 32
    annot_window: int = 50
    annot_tau: float = 0.5


def dyadic_grid(n: int, L_min: int) -> WindowGrid:
    """All dyadic windows of length >= L0 fitting in n, stride = length/2."""
    if L_min < 2:
        raise ValueError("L_min must be >= 2")
    L0 = 1 << max(int(math.ceil(math.log2(L_min))), 1)
    wins: list[tuple[int, int]] = []
    if n >= L0:
        L = L0
        while L <= n:
            stride = L // 2
            for start in range(0, n - L + 1, stride):
                wins.append((start, L))
            L *= 2
    return WindowGrid(windows=tuple(wins), L0=L0, n=n)


@dataclass
class PrefixSums:
    """O(1) window aggregates of the weighted scores.

    raw:   cumulative raw (unweighted) scores, the fast-filter signal
    ws:    cumulative w_i * s_i
    w:     cumulative w_i
    w2:    cumulative w_i^2
    All respect the validity mask (invalid positions contribute zero).
    """

    raw: np.ndarray
    ws: np.ndarray
    w: np.ndarray
    w2: np.ndarray
    theta_r: float

    @classmethod
    def from_series(cls, series: ScoreSeries) -> "PrefixSums":
        v = series.valid.astype(np.float64)
        s = series.fused * v
        w = series.weights * v
        return cls(
            raw=np.concatenate([[0.0], np.cumsum(s)]),
            ws=np.concatenate([[0.0], np.cumsum(w * series.fused)]),
            w=np.concatenate([[0.0], np.cumsum(w)]),
            w2=np.concatenate([[0.0], np.cumsum(w * w)]),
            theta_r=series.theta_r,
        )

    def window_sums(self, starts: np.ndarray, lengths: np.ndarray):
        ends = starts + lengths
        return (self.ws[ends] - self.ws[starts],
                self.w[ends] - self.w[starts],
                self.w2[ends] - self.w2[starts])

    def z_proxy(self, starts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        """Standardized excess of each window's weighted sum; scale-free
        across dyadic levels, monotone in significance at fixed weight
        profile.  Used only to pick which windows get exact p-values."""
        ws, w, w2 = self.window_sums(starts, lengths)
        sd = np.sqrt(np.maximum(self.theta_r * w2, 1e-300))
        return (ws - w) / sd

    def log10_p_window(self, start: int, length: int) -> float:
        ws, w, w2 = self.window_sums(np.array([start]), np.array([length]))
        if w[0] <= 0:
            return 0.0
        return moment_matched_log10_sf(float(ws[0]), float(w[0]), float(w2[0]), self.theta_r)

    def log10_p_pooled(self, regions: list[tuple[int, int]]) -> float:
        """Single weighted test pooled over disjoint regions."""
        S = Wt = W2 = 0.0
        for start, length in regions:
            ws, w, w2 = self.window_sums(np.array([start]), np.array([length]))
            S += float(ws[0]); Wt += float(w[0]); W2 += float(w2[0])
        if Wt <= 0:
            return 0.0
        return moment_matched_log10_sf(S, Wt, W2, self.theta_r)


def bonferroni_correct(log10_p_raw: float, M: int, y: int,
                       Y_max: int | None = None) -> float:
    """Search tax in log10 space: choose-y-of-M windows, plus the sweep
    over y when Y_max is given; y=0 is the global path (no penalty)."""
    if y == 0:
        return log10_p_raw
    if y > M:
        raise ValueError(f"cannot select y={y} regions from M={M} windows")
    out = log10_p_raw + log10_binom(M, y)
    if Y_max is not None:
        if y > Y_max:
            raise ValueError("y exceeds Y_max")
        out += math.log10(Y_max)
    return out


def _overlaps(start: int, end: int, regions: list[tuple[int, int]]) -> bool:
    return any(start < r_end and r_start < end for r_start, r_end in regions)


def greedy_extract(series: ScoreSeries, grid: WindowGrid,
                   config: LocalizeConfig = LocalizeConfig()) -> tuple[list[Region], float]:
    """Iteratively pull out disjoint high-scoring windows.

    Returns (regions, corrected pooled log10 p).  Stops when adding the
    best remaining window no longer improves the Bonferroni-corrected
    pooled significance, or at Y_max regions.
    """
    if grid.M == 0:
        return [], 0.0
    ps = PrefixSums.from_series(series)
    starts = np.array([w[0] for w in grid.windows])
    lengths = np.array([w[1] for w in grid.windows])
    chosen: list[tuple[int, int]] = []  # (start, end)
    chosen_regions: list[Region] = []
    best_corrected = math.inf

    for y in range(1, config.Y_max + 1):
        free = np.array([not _overlaps(s, s + l, chosen)
                         for s, l in zip(starts, lengths)])
        if not free.any():
            break
        idx_free = np.flatnonzero(free)
        z = ps.z_proxy(starts[idx_free], lengths[idx_free])
        top = idx_free[np.argsort(-z)[: config.top_c]]
        best_idx, best_p = -1, math.inf
        for i in top:
            p = ps.log10_p_window(int(starts[i]), int(lengths[i]))
            if p < best_p:
                best_idx, best_p = int(i), p
        cand = (int(starts[best_idx]), int(starts[best_idx] + lengths[best_idx]))
        pooled = ps.log10_p_pooled([(s, e - s) for s, e in chosen + [cand]])
        corrected = bonferroni_correct(pooled, grid.M, y, config.Y_max)
        if corrected >= best_corrected:
            break
        best_corrected = corrected
        chosen.append(cand)
        chosen_regions.append(Region(start=cand[0], end=cand[1],
                                     log10_p_raw=best_p, log10_p_corrected=corrected))
    if not chosen:
        return [], 0.0
    return chosen_regions, best_corrected


def ensemble_detect(series: ScoreSeries,
                    config: LocalizeConfig = LocalizeConfig()) -> EnsembleVerdict:
    """Adaptive three-way test: global, best single window, multi-region."""
    n = len(series)
    ps = PrefixSums.from_series(series)
    log10_global = ps.log10_p_pooled([(0, n)])

    grid = dyadic_grid(n, config.L_min)
    if grid.M == 0:
        log10_single = 0.0
        log10_multi = 0.0
        regions: list[Region] = []
    else:
        starts = np.array([w[0] for w in grid.windows])
        lengths = np.array([w[1] for w in grid.windows])
        z = ps.z_proxy(starts, lengths)
        top = np.argsort(-z)[: config.top_c]
        best_raw = min(ps.log10_p_window(int(starts[i]), int(lengths[i])) for i in top)
        log10_single = bonferroni_correct(best_raw, grid.M, 1)
        regions, log10_multi = greedy_extract(series, grid, config)
        if not regions:
            log10_multi = 0.0

    paths = {"global": log10_global, "single": log10_single, "multi": log10_multi}
    path_chosen = min(paths, key=paths.get)
    final = paths[path_chosen] + LOG10_3
    return EnsembleVerdict(log10_p_global=log10_global, log10_p_single=log10_single,
                           log10_p_multi=log10_multi, log10_p_final=final,
                           regions=tuple(regions), path_chosen=path_chosen, n=n)


def annotate_boundaries(series: ScoreSeries, config: LocalizeConfig = LocalizeConfig()) -> np.ndarray:
    """Per-token mask from a centered moving average of standardized scores.

    Only meaningful after the ensemble rejected the null; no search tax
    is applied here.  Invalid positions enter at the null mean.
    """
    theta = series.theta_r
    std = np.where(series.valid, (series.fused - 1.0) / math.sqrt(theta), 0.0)
    w = max(int(config.annot_window), 1)
    half = w // 2
    cs = np.concatenate([[0.0], np.cumsum(std)])
    n = std.size
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    avg = (cs[hi] - cs[lo]) / (hi - lo)
    return avg > config.annot_tau


def miou(pred_mask: np.ndarray, true_mask: np.ndarray) -> float:
    """Intersection-over-union of watermark-positive token sets."""
    a = np.asarray(pred_mask, dtype=bool)
    b = np.asarray(true_mask, dtype=bool)
    if a.shape != b.shape:
        raise ValueError("mask lengths differ")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def regions_mask(regions, n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for r in regions:
        mask[r.start: r.end] = True
    return mask
