"""Keyed pseudo-random function over (candidate token, context window, key).

The hash accumulates ``token_prime*x + sum_i q_i*w_i + key_prime*sk`` in
wrapping uint64, multiplies by an outer prime, and runs three
multiply-fold rounds before reducing mod M.  A single fold leaves paired
key streams visibly correlated (a key change is purely additive in the
product), so more rounds are used until paired streams decorrelate to
the sampling-noise floor; the whole construction is frozen in
``constants`` and published in VECTORS.md.

Uniform values are mapped to the open interval via ``(h + 0.5) / M`` so
that ``-log(1 - u)`` and ``log(u)`` are always finite.

Everything here is a pure function of its inputs and safe to call from
any number of threads.  ``hash_array`` / ``sliding_uniform`` are the
vectorized forms used by the samplers and detectors.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .constants import (
    FOLD_SHIFT_1,
    FOLD_SHIFT_2,
    FOLD_SHIFT_3,
    K_MAX,
    KEY_PRIME,
    LAYER_PRIME,
    MASK_64,
    MIX_PRIME_1,
    MIX_PRIME_2,
    MIX_PRIME_3,
    OUTER_PRIME,
    OUTPUT_MODULUS,
    TOKEN_PRIME,
    WINDOW_PRIMES,
)

# Instrumentation: number of per-candidate hash evaluations since the last
# reset.  Used by the benchmark harness to verify the sampler only hashes
# top-p survivors.
_hash_evals = 0


def reset_hash_counter() -> None:
    global _hash_evals
    _hash_evals = 0


def hash_eval_count() -> int:
    return _hash_evals


def _count(n: int) -> None:
    global _hash_evals
    _hash_evals += n


def check_window(window: Sequence[int], k: int | None = None) -> None:
    """Validate a context window against the configured length ``k``."""
    n = len(window)
    if n < 1 or n > K_MAX:
        raise ValueError(f"context window length must be in [1, {K_MAX}], got {n}")
    if k is not None and n != k:
        raise ValueError(f"context window length {n} != configured k={k}")


def _finalize(z: int) -> int:
    z = (z * MIX_PRIME_1) & MASK_64
    z ^= z >> FOLD_SHIFT_1
    z = (z * MIX_PRIME_2) & MASK_64
    z ^= z >> FOLD_SHIFT_2
    z = (z * MIX_PRIME_3) & MASK_64
    z ^= z >> FOLD_SHIFT_3
    return z % OUTPUT_MODULUS


def hash_raw(token: int, window: Sequence[int], key: int, k: int | None = None) -> int:
    """Reference scalar hash: integer in [0, M).

    Straight-line Python-int arithmetic; the vectorized paths are tested
    for bit-exact agreement against this function.
    """
    check_window(window, k)
    acc = (TOKEN_PRIME * int(token)) & MASK_64
    for i, w in enumerate(window):
        acc = (acc + WINDOW_PRIMES[i] * int(w)) & MASK_64
    acc = (acc + KEY_PRIME * (int(key) & MASK_64)) & MASK_64
    _count(1)
    return _finalize((acc * OUTER_PRIME) & MASK_64)


def prf_uniform(token: int, window: Sequence[int], key: int, k: int | None = None) -> float:
    """Uniform value in the open interval (0, 1)."""
    return (hash_raw(token, window, key, k) + 0.5) / OUTPUT_MODULUS


def _finalize_np(z: np.ndarray) -> np.ndarray:
    z = z * np.uint64(MIX_PRIME_1)
    z ^= z >> np.uint64(FOLD_SHIFT_1)
    z = z * np.uint64(MIX_PRIME_2)
    z ^= z >> np.uint64(FOLD_SHIFT_2)
    z = z * np.uint64(MIX_PRIME_3)
    z ^= z >> np.uint64(FOLD_SHIFT_3)
    return z & np.uint64(OUTPUT_MODULUS - 1)


def _window_acc(window: Sequence[int]) -> np.uint64:
    # accumulate in Python ints (arbitrary precision), wrap once
    acc = 0
    for i, w in enumerate(window):
        acc = (acc + WINDOW_PRIMES[i] * (int(w) & MASK_64)) & MASK_64
    return np.uint64(acc)


def hash_array(tokens: np.ndarray, window: Sequence[int], key: int,
               k: int | None = None) -> np.ndarray:
    """Hash many candidate tokens under one (window, key); returns uint64 in [0, M)."""
    check_window(window, k)
    t = np.ascontiguousarray(tokens, dtype=np.uint64)
    acc = np.uint64(TOKEN_PRIME) * t
    offset = (int(_window_acc(window)) + KEY_PRIME * (int(key) & MASK_64)) & MASK_64
    acc += np.uint64(offset)
    _count(t.size)
    return _finalize_np(acc * np.uint64(OUTER_PRIME))


def prf_vector(candidates: Sequence[int] | np.ndarray, window: Sequence[int], key: int,
               k: int | None = None) -> np.ndarray:
    """Uniform (0,1) values for a batch of distinct candidate token ids."""
    cand = np.asarray(candidates, dtype=np.int64)
    if cand.size == 0:
        raise ValueError("candidate list must be non-empty")
    if np.unique(cand).size != cand.size:
        raise ValueError("candidate token ids must be unique")
    h = hash_array(cand, window, key, k)
    return (h.astype(np.float64) + 0.5) / OUTPUT_MODULUS


def prf_matrix(candidates: Sequence[int] | np.ndarray, window: Sequence[int],
               keys: Sequence[int] | np.ndarray, k: int | None = None) -> np.ndarray:
    """Uniform values of shape (len(keys), len(candidates)) for Monte Carlo sweeps."""
    check_window(window, k)
    cand = np.asarray(candidates, dtype=np.uint64)
    ks = np.asarray(keys, dtype=np.uint64)
    acc = np.uint64(TOKEN_PRIME) * cand[None, :]
    acc = acc + np.uint64(int(_window_acc(window)))
    acc = acc + (np.uint64(KEY_PRIME) * ks)[:, None]
    _count(cand.size * ks.size)
    h = _finalize_np(acc * np.uint64(OUTER_PRIME))
    return (h.astype(np.float64) + 0.5) / OUTPUT_MODULUS


def sliding_uniform(tokens: Sequence[int] | np.ndarray, k: int, key: int) -> np.ndarray:
    """Per-position uniform values u[t] = PRF(x_t, (x_{t-k},..,x_{t-1}), key).

    Positions t < k have no full window and are returned as NaN; the
    detector masks them out.
    """
    x = np.ascontiguousarray(tokens, dtype=np.uint64)
    n = x.size
    out = np.full(n, np.nan)
    if n <= k:
        return out
    acc = np.uint64(TOKEN_PRIME) * x[k:]
    for i in range(k):
        acc = acc + np.uint64(WINDOW_PRIMES[i]) * x[i : n - k + i]
    acc = acc + np.uint64((KEY_PRIME * (int(key) & MASK_64)) & MASK_64)
    _count(n - k)
    h = _finalize_np(acc * np.uint64(OUTER_PRIME))
    out[k:] = (h.astype(np.float64) + 0.5) / OUTPUT_MODULUS
    return out


def layer_key(key: int, layer: int) -> int:
    """Derive the per-layer key used by tournament sampling (layer >= 1)."""
    return (int(key) ^ ((layer * LAYER_PRIME) & MASK_64)) & MASK_64


def golden_rows() -> list[tuple[int, tuple[int, ...], int, int]]:
    """The published golden vectors: (token, window, key, hash)."""
    rows: list[tuple[int, tuple[int, ...], int, int]] = []
    inputs: Iterable[tuple[int, tuple[int, ...], int]] = [
        (0, (0, 0, 0), 0),
        (1, (0, 0, 0), 0),
        (0, (1, 0, 0), 0),
        (0, (0, 0, 1), 0),
        (0, (0, 0, 0), 1),
        (7, (1, 2, 3), 42),
        (7, (3, 2, 1), 42),
        (4095, (4095, 4095, 4095), 0xFFFFFFFFFFFFFFFF),
        (12, (3,), 99),
        (12, (3, 5), 99),
        (12, (3, 5, 8), 99),
        (12, (3, 5, 8, 13), 99),
        (12, (3, 5, 8, 13, 21), 99),
        (12, (3, 5, 8, 13, 21, 34), 99),
        (12, (3, 5, 8, 13, 21, 34, 55), 99),
        (12, (3, 5, 8, 13, 21, 34, 55, 89), 99),
        (31337, (271828, 161803, 141421), 2718281828459045235),
        (1, (1, 1, 1), 1),
    ]
    for token, window, key in inputs:
        rows.append((token, window, key, hash_raw(token, window, key)))
    return rows
