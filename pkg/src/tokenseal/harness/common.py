"""Shared experiment plumbing: specs, seeding, worker pool, CSV output.

Every trial derives its generator from (master seed, trial index), and
results are reduced in trial order, so output files are identical no
matter how many workers ran the trials.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from ..sampling import SamplerConfig
from ..toylm import CompiledModel, ToyModel, build_synthetic_corpus, train_text

CSV_SCHEMA_VERSION = "tokenseal-csv v1"

# corpus / model defaults shared by experiments and tests
CORPUS_CHARS = 1_200_000
CORPUS_SEED = 20_240_101
MODEL_ORDER = 4
MODEL_VOCAB = 2048
MODEL_SMOOTHING = 3e-5
PROXY_ORDER = 2

#: default key pair for experiment generations and a disjoint pair nulls
#: are generated with (never fed to detection).
EXP_KEYS = (0x5EED_0001, 0x5EED_0002)
NULL_KEYS = (0xD15C_0001, 0xD15C_0002)


@dataclass
class ExperimentSpec:
    """Parameterizes one experiment run."""

    tag: str
    trials: int = 200
    gen_len: int = 400
    seed: int = 0
    workers: int = 1
    output: str | None = None
    grid: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    def trial_rng(self, index: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, index]))


@lru_cache(maxsize=4)
def default_model(order: int = MODEL_ORDER, vocab_size: int = MODEL_VOCAB,
                  smoothing: float = MODEL_SMOOTHING) -> ToyModel:
    corpus = build_synthetic_corpus(CORPUS_CHARS, seed=CORPUS_SEED)
    return train_text(corpus, order=order, vocab_size=vocab_size, smoothing=smoothing)


@lru_cache(maxsize=2)
def default_proxy() -> CompiledModel:
    """Order-reduced model playing the lightweight entropy-proxy role."""
    return CompiledModel(default_model(order=PROXY_ORDER), temperature=1.0)


def default_sampler_config(**overrides) -> SamplerConfig:
    base = dict(strategy="dual_key", keys=EXP_KEYS, alpha=0.1, k=3,
                temperature=1.0, top_p=0.9, repeated_context_masking=True)
    base.update(overrides)
    return SamplerConfig(**base)


# ---------------------------------------------------------------------------
# worker pool
#
# Trials are dispatched by index only; the task closure, payload list and
# setup hook are inherited by forked children through module globals, so
# arbitrary (unpicklable) closures work.  Results come back in trial
# order and each trial seeds itself from (master seed, index), making
# output identical for any worker count.

_task_fn: Callable | None = None
_task_payloads: Sequence = ()
_task_setup: Callable | None = None
_task_shared = None


def _fork_init():
    global _task_shared
    _task_shared = _task_setup() if _task_setup is not None else None


def _pool_call(index: int):
    return index, _task_fn(index, _task_payloads[index], _task_shared)


def run_trials(fn: Callable, payloads: Sequence, workers: int = 1,
               setup: Callable | None = None) -> list:
    """Run fn(index, payload, shared) over payloads; ordered results.

    ``setup`` builds per-process shared state (e.g. the toy model) once;
    in serial mode it runs once in-process.
    """
    payloads = list(payloads)
    if workers <= 1:
        shared = setup() if setup is not None else None
        return [fn(i, p, shared) for i, p in enumerate(payloads)]
    global _task_fn, _task_payloads, _task_setup
    _task_fn, _task_payloads, _task_setup = fn, payloads, setup
    try:
        import multiprocessing
        ctx = multiprocessing.get_context("fork")
        out: list = [None] * len(payloads)
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx,
                                 initializer=_fork_init) as pool:
            chunk = max(1, len(payloads) // (workers * 8))
            for index, result in pool.map(_pool_call, range(len(payloads)),
                                          chunksize=chunk):
                out[index] = result
        return out
    finally:
        _task_fn, _task_payloads, _task_setup = None, (), None


def write_csv(path: str, tag: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with a schema-version comment line, then a plain header row."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"# {CSV_SCHEMA_VERSION} experiment={tag}\n")
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
