"""Radioactivity experiment on the simulated student."""

from __future__ import annotations

import numpy as np

from ..generate import compile_model, generate_sequence, sample_prompts
from ..radioactive import radioactivity_pvalue, simulate_student
from .common import (EXP_KEYS, ExperimentSpec, default_model,
                     default_sampler_config, run_trials, write_csv)

K = 3


def _setup():
    model = default_model()
    cfg = default_sampler_config()
    return model, compile_model(model, cfg), cfg


def make_traces(shared, n_traces: int, trace_len: int, rng) -> list[list[int]]:
    model, comp, cfg = shared
    traces = []
    for _ in range(n_traces):
        prompt = sample_prompts(model, 1, max(K, model.order), rng)[0]
        traces.append(prompt + generate_sequence(
            comp, prompt, trace_len, cfg.with_seed(int(rng.integers(2**62)))))
    return traces


def run_radioactivity(spec: ExperimentSpec) -> list[tuple]:
    """Rows: (beta, weighting, median_neglog10p, n_valid_mean).

    One trial = a fresh batch of watermarked teacher traces plus a
    simulated student at internalization strength beta.
    """
    betas = spec.grid.get("betas", (0.0, 0.25, 0.5, 1.0))
    weightings = spec.grid.get("weightings", ("uniform", "sqrt_norm"))
    n_traces = spec.grid.get("n_traces", 8)
    trace_len = spec.grid.get("trace_len", 120)

    def one(i, payload, shared):
        beta = payload
        model, comp, cfg = shared
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, int(beta * 1000), i]))
        traces = make_traces(shared, n_traces, trace_len, rng)
        streams = simulate_student(comp, traces, beta, EXP_KEYS, K, rng)
        out = []
        for wk in weightings:
            v = radioactivity_pvalue(streams, EXP_KEYS, alpha=0.1, weighting=wk)
            out.append((v.log10_p, v.n_valid))
        return out

    rows = []
    for beta in betas:
        res = run_trials(one, [beta] * spec.trials, workers=spec.workers, setup=_setup)
        for j, wk in enumerate(weightings):
            lps = np.asarray([r[j][0] for r in res])
            nv = np.asarray([r[j][1] for r in res])
            rows.append((beta, wk, float(np.median(-lps)), float(nv.mean())))
    if spec.output:
        write_csv(spec.output, "radioactivity",
                  ("beta", "weighting", "median_neglog10p", "n_valid_mean"), rows)
    return rows
