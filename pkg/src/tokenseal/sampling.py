"""Distortion-free watermarked token selection.

The core selection is the exponential race: for candidate v with model
probability p_v and keyed uniform r_v, pick argmin (-ln r_v) / p_v.  This
equals argmax r_v^{1/p_v} but never underflows for small p_v.  On top of
that sit the diversity strategies:

  single_key      deterministic baseline
  dual_key        route between two keys (Bernoulli(alpha) per step)
  mixing          mix each candidate's r with a true-random coin
  periodic_skip   drop the watermark on a Bernoulli(alpha) subset of steps
  entropy_skip    resample when r_sel < tau^{p_sel} (skip rate exactly tau)
  adaptive_skip   resample when r_sel < tau (NOT distortion-free; kept as
                  the reference point its closed-form distortion predicts)

Coins for routing and skipping come from a seeded generator owned by the
per-sequence ``GenState``; the watermark PRF is the only keyed randomness.
``sample_batch`` vectorizes one generation step over many keys and is the
code path ``step`` itself uses, so the Monte Carlo marginals exercise
production selection logic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import prf
from .constants import K_MAX

STRATEGIES = (
    "none",
    "single_key",
    "dual_key",
    "mixing",
    "periodic_skip",
    "entropy_skip",
    "adaptive_skip",
    "synthid",
)

_PROB_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ProbVector:
    """A validated categorical distribution over a vocabulary slice."""

    ids: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if ids.ndim != 1 or probs.ndim != 1 or ids.size != probs.size:
            raise ValueError("ids and probs must be 1-D and aligned")
        if ids.size == 0:
            raise ValueError("empty distribution")
        if np.unique(ids).size != ids.size:
            raise ValueError("token ids must be unique")
        if not np.all(probs > 0):
            raise ValueError("probabilities must be strictly positive")
        if abs(float(probs.sum()) - 1.0) > _PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return int(self.ids.size)

    def entropy(self) -> float:
        return float(-np.sum(self.probs * np.log(self.probs)))


@dataclass(frozen=True)
class SamplerConfig:
    """Strategy selector plus decoding filters.

    keys: one key for single-key strategies, two for dual_key.
    alpha: routing probability (dual_key) or skip rate (periodic_skip).
    a: mixing rate; tau: target skip rate for the skip strategies.
    """

    strategy: str = "single_key"
    keys: tuple[int, ...] = (0,)
    alpha: float = 0.0
    a: float = 0.3
    tau: float = 0.1
    k: int = 3
    temperature: float = 1.0
    top_p: float = 1.0
    repeated_context_masking: bool = False
    rng_seed: int = 0
    depth: int = 10  # tournament layers, synthid strategy only

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not 1 <= self.k <= K_MAX:
            raise ValueError(f"k must be in [1, {K_MAX}]")
        if not 0.0 <= self.alpha <= 0.5:
            raise ValueError("alpha must be in [0, 0.5]")
        if not 0.0 < self.a < 1.0:
            raise ValueError("a must be in (0, 1)")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must be in (0, 1)")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.strategy == "dual_key" and len(self.keys) < 2:
            raise ValueError("dual_key needs two keys")
        if self.strategy not in ("none",) and len(self.keys) < 1:
            raise ValueError("watermarked strategies need a key")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")

    def with_seed(self, seed: int) -> "SamplerConfig":
        return replace(self, rng_seed=seed)


@dataclass
class GenState:
    """Per-sequence generation state; never share across sequences."""

    rng: np.random.Generator
    history: list[int] = field(default_factory=list)
    seen_contexts: set = field(default_factory=set)

    @classmethod
    def fresh(cls, config: SamplerConfig, prompt: Sequence[int] = ()) -> "GenState":
        return cls(rng=np.random.default_rng(config.rng_seed), history=list(prompt))


def apply_decoding_filters(logits: np.ndarray, temperature: float = 1.0,
                           top_p: float = 1.0) -> ProbVector:
    """Temperature softmax followed by nucleus truncation, ids sorted by
    falling probability (ties by id)."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise ValueError("logits must be a non-empty vector")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if not 0.0 < top_p <= 1.0:
        raise ValueError("top_p must be in (0, 1]")
    z = z / temperature
    finite = np.isfinite(z)
    if not finite.any():
        raise ValueError("all logits are -inf")
    zmax = z[finite].max()
    ex = np.where(finite, np.exp(z - zmax), 0.0)
    p = ex / ex.sum()
    order = np.lexsort((np.arange(p.size), -p))
    p_sorted = p[order]
    cum = np.cumsum(p_sorted)
    cut = int(np.searchsorted(cum, top_p - 1e-12)) + 1
    keep = order[:cut]
    kept = p[keep]
    return ProbVector(ids=keep, probs=kept / kept.sum())


def gumbel_select(probs: ProbVector, r: np.ndarray) -> tuple[int, float]:
    """Exponential-race argmin; ties broken by lowest token id.

    Returns the winning token id and its r value (the skip strategies
    need the winner's r).
    """
    rv = np.asarray(r, dtype=np.float64)
    if rv.shape != probs.probs.shape:
        raise ValueError("r must align with probs.ids")
    z = -np.log(rv) / probs.probs
    zmin = z.min()
    contenders = np.flatnonzero(z == zmin)
    if contenders.size == 1:
        i = int(contenders[0])
    else:
        i = int(contenders[np.argmin(probs.ids[contenders])])
    return int(probs.ids[i]), float(rv[i])


def route_key(state: GenState, alpha: float) -> int:
    """Pick key index 1 or 2: P(index 2) = alpha."""
    return 2 if state.rng.random() < alpha else 1


def mixing_transform(r1: float | np.ndarray, coin: bool | np.ndarray,
                     a: float) -> float | np.ndarray:
    """Mix a PRF value with a Bernoulli(a) coin; uniform in, uniform out.

    coin True selects the low branch a*r1 (probability a), False the high
    branch a + (1-a)*r1.
    """
    if not 0.0 < a < 1.0:
        raise ValueError("a must be in (0, 1)")
    return np.where(coin, a * np.asarray(r1), a + (1.0 - a) * np.asarray(r1))


def adaptive_skip_check(r_selected: float, p_selected: float, tau: float,
                        normalized: bool) -> bool:
    """Skip decision for the two skip strategies.

    normalized=True compares against tau^p_selected so every token skips
    with probability exactly tau; normalized=False is the fixed threshold
    (distorting) variant.
    """
    if not 0.0 < p_selected <= 1.0:
        raise ValueError("p_selected must be in (0, 1]")
    threshold = tau ** p_selected if normalized else tau
    return bool(r_selected < threshold)


def _true_random_token(probs: ProbVector, rng: np.random.Generator) -> int:
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs.probs), u))
    return int(probs.ids[min(idx, len(probs) - 1)])


def sample_batch(probs: ProbVector, window: Sequence[int], config: SamplerConfig,
                 n: int, rng: np.random.Generator,
                 keys_override: np.ndarray | None = None) -> np.ndarray:
    """One generation step for ``n`` independent keyed trials.

    Each row uses its own secret key (``keys_override`` or row index) and
    independent coins from ``rng``, with a fixed (probs, window).  This is
    the Monte Carlo entry point for the distortion and score oracles;
    ``step`` delegates to it with n=1.
    """
    if keys_override is not None:
        keys1 = np.asarray(keys_override, dtype=np.uint64)
    else:
        keys1 = np.arange(n, dtype=np.uint64)
    strat = config.strategy
    p = probs.probs
    if strat == "none":
        return np.asarray(probs.ids)[_multinomial_rows(p, n, rng)]

    if strat == "dual_key":
        r1 = prf.prf_matrix(probs.ids, window, keys1, config.k)
        keys2 = keys1 + np.uint64(0x9E3779B97F4A7C15)  # distinct second key per row
        r2 = prf.prf_matrix(probs.ids, window, keys2, config.k)
        coin = rng.random(n) < config.alpha
        r = np.where(coin[:, None], r2, r1)
        return _race_argmin(probs, r)[0]

    r1 = prf.prf_matrix(probs.ids, window, keys1, config.k)
    if strat == "single_key":
        return _race_argmin(probs, r1)[0]
    if strat == "mixing":
        coins = rng.random((n, len(probs))) < config.a
        r = mixing_transform(r1, coins, config.a)
        return _race_argmin(probs, r)[0]
    if strat == "periodic_skip":
        tokens, _ = _race_argmin(probs, r1)
        skip = rng.random(n) < config.alpha
        if skip.any():
            tokens[skip] = np.asarray(probs.ids)[_multinomial_rows(p, int(skip.sum()), rng)]
        return tokens
    if strat in ("entropy_skip", "adaptive_skip"):
        tokens, r_sel = _race_argmin(probs, r1)
        id_to_p = dict(zip(probs.ids.tolist(), p.tolist()))
        p_sel = np.array([id_to_p[int(t)] for t in tokens])
        thr = config.tau ** p_sel if strat == "entropy_skip" else config.tau
        skip = r_sel < thr
        if skip.any():
            tokens[skip] = np.asarray(probs.ids)[_multinomial_rows(p, int(skip.sum()), rng)]
        return tokens
    raise ValueError(f"strategy {strat!r} has no batch sampler")


def _race_argmin(probs: ProbVector, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized exponential race over rows of r; returns (tokens, winning r)."""
    z = -np.log(r) / probs.probs[None, :]
    # ids sorted ascending within ties: argmin returns the first minimum, so
    # pre-sorting columns by id makes the tie-break "lowest token id".
    order = np.argsort(probs.ids, kind="stable")
    z = z[:, order]
    cols = np.argmin(z, axis=1)
    ids_sorted = np.asarray(probs.ids)[order]
    rows = np.arange(r.shape[0])
    r_sorted = r[:, order]
    return ids_sorted[cols].copy(), r_sorted[rows, cols]


def _multinomial_rows(p: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(p)
    idx = np.searchsorted(cum, rng.random(n))
    return np.minimum(idx, p.size - 1)


def step(state: GenState, probs: ProbVector, config: SamplerConfig) -> int:
    """Emit one token and append it to the state's history.

    The first k positions of a generation have no full context window and
    fall back to unwatermarked sampling; detection skips them too.
    """
    if len(probs) == 0:
        raise ValueError("empty distribution")
    if len(state.history) < config.k or config.strategy == "none":
        token = _true_random_token(probs, state.rng)
        state.history.append(token)
        return token

    window = tuple(state.history[-config.k:])
    strat = config.strategy

    if strat == "dual_key":
        token = _dual_key_step(state, probs, config, window)
        state.history.append(token)
        return token

    if config.repeated_context_masking and window in state.seen_contexts:
        token = _true_random_token(probs, state.rng)
        state.history.append(token)
        return token

    key = config.keys[0]
    watermarked = True
    if strat == "single_key":
        token, _ = gumbel_select(probs, prf.prf_vector(probs.ids, window, key, config.k))
    elif strat == "mixing":
        r1 = prf.prf_vector(probs.ids, window, key, config.k)
        coins = state.rng.random(len(probs)) < config.a
        token, _ = gumbel_select(probs, mixing_transform(r1, coins, config.a))
    elif strat == "periodic_skip":
        if state.rng.random() < config.alpha:
            token = _true_random_token(probs, state.rng)
            watermarked = False
        else:
            token, _ = gumbel_select(probs, prf.prf_vector(probs.ids, window, key, config.k))
    elif strat in ("entropy_skip", "adaptive_skip"):
        r = prf.prf_vector(probs.ids, window, key, config.k)
        token, r_sel = gumbel_select(probs, r)
        p_sel = float(probs.probs[np.flatnonzero(probs.ids == token)[0]])
        if adaptive_skip_check(r_sel, p_sel, config.tau, normalized=strat == "entropy_skip"):
            token = _true_random_token(probs, state.rng)
            watermarked = False
    else:
        raise ValueError(f"step does not handle strategy {strat!r}")

    if config.repeated_context_masking and watermarked:
        state.seen_contexts.add(window)
    state.history.append(token)
    return token


def _dual_key_step(state: GenState, probs: ProbVector, config: SamplerConfig,
                   window: tuple[int, ...]) -> int:
    idx = route_key(state, config.alpha)
    if config.repeated_context_masking:
        if (window, idx) in state.seen_contexts:
            other = 3 - idx
            if (window, other) in state.seen_contexts:
                # third occurrence of this context: full fallback
                return _true_random_token(probs, state.rng)
            idx = other
        state.seen_contexts.add((window, idx))
    key = config.keys[idx - 1]
    token, _ = gumbel_select(probs, prf.prf_vector(probs.ids, window, key, config.k))
    return token
