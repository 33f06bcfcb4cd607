"""Empirical false-positive-rate calibration on null corpora.

Null documents are toy-model text carrying no trace of the detection
keys (plain sampling by default; optionally watermarked under a disjoint
key pair, which must calibrate identically).  For every detector mode we
report the empirical FPR at nominal thresholds with Clopper-Pearson
intervals; a calibrated detector never exceeds nominal + CI.
"""

from __future__ import annotations

import numpy as np

from ..detect import DetectConfig, detect, score_tokens
from ..generate import compile_model, generate_sequence, sample_prompts
from ..localize import LocalizeConfig, ensemble_detect
from ..sampling import SamplerConfig
from ..stats import clopper_pearson
from .common import (EXP_KEYS, NULL_KEYS, ExperimentSpec, default_model,
                     default_proxy, default_sampler_config, run_trials, write_csv)

TAUS = (1e-1, 1e-2, 1e-3, 1e-4)

DETECTOR_MODES = ("classical", "fusion_a0.1", "fusion_a0.5", "entropy", "wrong_k",
                  "synthid", "ensemble")


def _detector_configs() -> dict[str, DetectConfig]:
    return {
        "classical": DetectConfig(keys=(EXP_KEYS[0],), alpha=0.0),
        "fusion_a0.1": DetectConfig(keys=EXP_KEYS, alpha=0.1),
        "fusion_a0.5": DetectConfig(keys=EXP_KEYS, alpha=0.5),
        "entropy": DetectConfig(keys=EXP_KEYS, alpha=0.5, weighting="entropy"),
        "wrong_k": DetectConfig(keys=EXP_KEYS, alpha=0.5, k=4),
        "synthid": DetectConfig(keys=(EXP_KEYS[0],), method="synthid"),
    }


def _null_setup_factory(null_strategy: str, need_proxy: bool):
    def setup():
        model = default_model()
        if null_strategy == "none":
            cfg = SamplerConfig(strategy="none", keys=(0,), temperature=1.0, top_p=0.9)
        else:
            cfg = default_sampler_config(strategy=null_strategy, keys=NULL_KEYS)
        proxy = default_proxy() if need_proxy else None
        return model, compile_model(model, cfg), cfg, proxy

    return setup


def doc_log10_pvalues(toks: np.ndarray, modes, proxy) -> dict[str, float]:
    """One document through every detector mode.

    The per-key score arrays are computed once and shared across the
    fusion variants; each mode's p-value still comes from the production
    test functions.
    """
    from dataclasses import replace

    from ..detect import attach_entropy_weights, proxy_entropies, weighted_gamma_pvalue

    cfgs = _detector_configs()
    out: dict[str, float] = {}
    shared = None
    if any(m in modes for m in ("classical", "fusion_a0.1", "fusion_a0.5",
                                "entropy", "ensemble")):
        shared = score_tokens(toks, EXP_KEYS, 3, 0.5)
    for mode in modes:
        if mode == "classical":
            series = replace(shared, fused=shared.s1, alpha=0.0,
                             weights=np.ones_like(shared.s1))
            out[mode] = weighted_gamma_pvalue(series).log10_p
        elif mode in ("fusion_a0.1", "fusion_a0.5"):
            a = 0.1 if mode.endswith("0.1") else 0.5
            series = replace(shared, fused=(1 - a) * shared.s1 + a * shared.s2,
                             alpha=a, weights=np.ones_like(shared.s1))
            out[mode] = weighted_gamma_pvalue(series).log10_p
        elif mode == "entropy":
            series = replace(shared, weights=np.ones_like(shared.s1))
            attach_entropy_weights(series, proxy_entropies(toks, proxy, 3))
            out[mode] = weighted_gamma_pvalue(series).log10_p
        elif mode == "ensemble":
            out[mode] = ensemble_detect(shared, LocalizeConfig()).log10_p_final
        else:
            out[mode] = detect(toks, cfgs[mode], proxy=proxy).log10_p
    return out


def null_pvalue_table(n_docs: int, doc_len: int, seed: int, workers: int = 1,
                      null_strategy: str = "none",
                      modes=DETECTOR_MODES) -> dict[str, np.ndarray]:
    """log10 p per null document for each detector mode."""
    modes = tuple(modes)

    def one(i, _payload, shared):
        model, comp, cfg, proxy = shared
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        prompt = sample_prompts(model, 1, max(cfg.k, model.order), rng)[0]
        if cfg.strategy == "none":
            toks = comp.stream_tokens(prompt, doc_len, rng)
        else:
            toks = np.asarray(
                generate_sequence(comp, prompt, doc_len,
                                  cfg.with_seed(int(rng.integers(2**63)))),
                dtype=np.int64)
        vals = doc_log10_pvalues(toks, modes, proxy)
        return tuple(vals[m] for m in modes)

    rows = run_trials(one, range(n_docs), workers=workers,
                      setup=_null_setup_factory(null_strategy, "entropy" in modes))
    arr = np.asarray(rows)
    return {m: arr[:, j] for j, m in enumerate(modes)}


def run_fpr_calibration(spec: ExperimentSpec) -> list[tuple]:
    """Rows: (mode, tau, n_docs, hits, empirical_fpr, ci_lo, ci_hi)."""
    doc_len = spec.grid.get("doc_len", 256)
    null_strategy = spec.grid.get("null_strategy", "none")
    modes = tuple(spec.grid.get("modes", DETECTOR_MODES))
    pvals = null_pvalue_table(spec.trials, doc_len, spec.seed, spec.workers,
                              null_strategy, modes)
    rows = []
    for mode in modes:
        lp = pvals[mode]
        for tau in TAUS:
            hits = int((lp <= np.log10(tau)).sum())
            fpr = hits / len(lp)
            lo, hi = clopper_pearson(hits, len(lp))
            rows.append((mode, tau, len(lp), hits, fpr, lo, hi))
    if spec.output:
        write_csv(spec.output, "fpr-calibration",
                  ("mode", "tau", "n_docs", "hits", "empirical_fpr", "ci_lo", "ci_hi"), rows)
    return rows
