"""Statistical primitives shared by the detectors.

p-values are carried in log10 form so documents with p below the float64
underflow threshold (~1e-308) still get a finite, comparable score.  The
fast path uses scipy's regularized incomplete gamma; when that underflows
we fall back to arbitrary-precision evaluation with mpmath (rare, and
only for already-overwhelming detections).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import special, stats as sstats

LN10 = math.log(10.0)

#: Exact hypoexponential tails are used instead of the two-moment Gamma fit
#: when the weighted statistic has at most this many exponential components
#: (and pairwise-distinct scales).  Beyond that the partial-fraction form is
#: numerically fragile, which is the reason the Gamma fit exists.
HYPOEXP_MAX_COMPONENTS = 16
_HYPOEXP_MIN_GAP = 1e-9


def gamma_pvalue(s: float, T: int) -> float:
    """P(Gamma(T, 1) > s): the classical score test against chance."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if s < 0:
        raise ValueError("score must be non-negative")
    return float(special.gammaincc(T, s))


def log10_gamma_sf(x: float, shape: float, scale: float = 1.0) -> float:
    """log10 P(Gamma(shape, scale) > x), accurate into the deep tail."""
    if x <= 0:
        return 0.0
    z = x / scale
    p = float(special.gammaincc(shape, z))
    if p > 1e-290:
        return math.log10(p)
    # scipy underflowed: evaluate the regularized upper gamma with mpmath
    with mpmath.workdps(30):
        q = mpmath.gammainc(shape, z, mpmath.inf, regularized=True)
        return float(mpmath.log10(q))


def log10_normal_sf(z: float) -> float:
    """log10 P(N(0,1) > z)."""
    return float(sstats.norm.logsf(z)) / LN10


def hypoexp_sf(x: float, scales: np.ndarray) -> float:
    """Exact tail of a sum of independent exponentials with the given scales.

    Partial-fraction form; requires pairwise-distinct scales.  Numerically
    fragile when scales are close, hence the guard in
    ``weighted_gamma_log10_sf``.
    """
    if x <= 0:
        return 1.0
    th = np.asarray(scales, dtype=np.float64)
    lam = 1.0 / th
    coef = np.ones_like(lam)
    for i in range(lam.size):
        others = np.delete(lam, i)
        coef[i] = np.prod(others / (others - lam[i]))
    return float(np.sum(coef * np.exp(-lam * x)))


def log10_hypoexp_sf(x: float, scales: np.ndarray) -> float:
    p = hypoexp_sf(x, scales)
    if p > 1e-290:
        return math.log10(max(p, 5e-324))
    # deep tail: the slowest-decaying component dominates
    th = np.asarray(scales, dtype=np.float64)
    lam = 1.0 / th
    i = int(np.argmin(lam))
    others = np.delete(lam, i)
    coef = np.prod(others / (others - lam[i]))
    return (math.log(abs(coef)) - lam[i] * x) / LN10


@dataclass(frozen=True)
class WeightedTail:
    """Result of a weighted-score tail evaluation."""

    log10_p: float
    k_new: float
    theta_new: float
    method: str  # "gamma" (moment-matched) or "hypoexp" (exact small-n)


def _component_scales(weights: np.ndarray, alpha: float) -> np.ndarray:
    """Exponential component scales of the null weighted statistic."""
    w = np.asarray(weights, dtype=np.float64)
    if alpha == 0.0:
        return w
    return np.concatenate([w * (1.0 - alpha), w * alpha])


def moment_matched_params(sum_w: float, sum_w2: float, theta_r: float) -> tuple[float, float]:
    """Two-moment Gamma fit (shape, scale) for the weighted null statistic."""
    theta_new = theta_r * sum_w2 / sum_w
    k_new = sum_w**2 / (theta_r * sum_w2)
    return k_new, theta_new


def moment_matched_log10_sf(s: float, sum_w: float, sum_w2: float, theta_r: float) -> float:
    """log10 tail of the weighted statistic from summary sums alone."""
    k_new, theta_new = moment_matched_params(sum_w, sum_w2, theta_r)
    return log10_gamma_sf(s, k_new, theta_new)


def weighted_gamma_log10_sf(s: float, weights: np.ndarray, theta_r: float,
                            alpha: float = 0.0) -> WeightedTail:
    """Tail probability of S = sum_i w_i * s_i under the null.

    Uses the exact hypoexponential when the statistic has few components
    with well-separated scales (where the partial-fraction form is stable
    and strictly more accurate), and the two-moment Gamma fit otherwise.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise ValueError("need at least one weighted score")
    sum_w = float(np.sum(w))
    sum_w2 = float(np.sum(w * w))
    k_new, theta_new = moment_matched_params(sum_w, sum_w2, theta_r)
    scales = _component_scales(w, alpha)
    if scales.size <= HYPOEXP_MAX_COMPONENTS:
        gaps = np.abs(scales[:, None] - scales[None, :])
        np.fill_diagonal(gaps, np.inf)
        if float(gaps.min()) > _HYPOEXP_MIN_GAP * float(scales.max()):
            return WeightedTail(log10_hypoexp_sf(s, scales), k_new, theta_new, "hypoexp")
    return WeightedTail(log10_gamma_sf(s, k_new, theta_new), k_new, theta_new, "gamma")


def clopper_pearson(successes: int, trials: int, conf: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval for an empirical rate."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    a = (1.0 - conf) / 2.0
    lo = 0.0 if successes == 0 else float(sstats.beta.ppf(a, successes, trials - successes + 1))
    hi = 1.0 if successes == trials else float(sstats.beta.ppf(1 - a, successes + 1, trials - successes))
    return lo, hi


def log10_binom(n: int, k: int) -> float:
    """log10 of the binomial coefficient C(n, k) via log-gamma (no overflow)."""
    if k < 0 or k > n:
        raise ValueError(f"require 0 <= y <= M, got y={k}, M={n}")
    return (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)) / LN10
