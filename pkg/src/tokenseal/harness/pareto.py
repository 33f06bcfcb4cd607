"""Diversity-detectability sweep: Self-BLEU vs median detection power.

Two generations per prompt (same keys, different coin seeds) give the
Self-BLEU diversity measure; detection runs both the classical and
entropy-weighted tests.  Repeated-context masking is off here so that
the deterministic alpha=0 corner really is deterministic.
"""

from __future__ import annotations

from collections import Counter

import numpy as np

from ..detect import DetectConfig, detect
from ..generate import compile_model, generate_sequence, sample_prompts
from .common import (EXP_KEYS, ExperimentSpec, default_model, default_proxy,
                     default_sampler_config, run_trials, write_csv)


def _ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _bleu(hyp, ref, max_order: int) -> float:
    """Clipped n-gram precision BLEU with brevity penalty.

    Orders >= 2 get add-one smoothing; order 1 is raw, so fully disjoint
    texts score 0.
    """
    if len(hyp) == 0 or len(ref) == 0:
        raise ValueError("empty input")
    log_precisions = []
    for n in range(1, max_order + 1):
        h = _ngram_counts(hyp, n)
        r = _ngram_counts(ref, n)
        total = max(len(hyp) - n + 1, 0)
        if total == 0:
            continue
        matches = sum(min(c, r.get(g, 0)) for g, c in h.items())
        if n == 1:
            if matches == 0:
                return 0.0
            p = matches / total
        else:
            p = (matches + 1) / (total + 1)
        log_precisions.append(np.log(p))
    if not log_precisions:
        return 0.0
    bp = 1.0 if len(hyp) >= len(ref) else float(np.exp(1 - len(ref) / len(hyp)))
    return float(bp * np.exp(np.mean(log_precisions)))


def self_bleu(text_a, text_b, max_order: int = 4) -> float:
    """Symmetric BLEU between two generations; 1.0 means identical."""
    a = list(text_a)
    b = list(text_b)
    return 0.5 * (_bleu(a, b, max_order) + _bleu(b, a, max_order))


GRID = (
    ("dual_key", "alpha", (0.0, 0.1, 0.25, 0.5)),
    ("mixing", "a", (0.2, 0.5)),
    ("entropy_skip", "tau", (0.1, 0.3)),
    ("periodic_skip", "alpha", (0.2,)),
)


def run_pareto_sweep(spec: ExperimentSpec) -> list[tuple]:
    """Rows: (strategy, control, value, median self_bleu,
    median -log10p classical, median -log10p entropy)."""
    grid = spec.grid.get("grid", GRID)

    def setup():
        model = default_model()
        return model, default_proxy()

    def one(i, payload, shared):
        strategy, control, value = payload["point"]
        model, proxy = shared
        cfg = default_sampler_config(strategy=strategy, repeated_context_masking=False,
                                     **{control: value})
        comp = compile_model(model, cfg)
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, i]))
        prompt = sample_prompts(model, 1, max(cfg.k, model.order), rng)[0]
        s1 = int(rng.integers(2**62))
        gen_a = generate_sequence(comp, prompt, spec.gen_len, cfg.with_seed(s1))
        gen_b = generate_sequence(comp, prompt, spec.gen_len, cfg.with_seed(s1 + 1))
        sb = self_bleu(gen_a, gen_b)
        classical = detect(gen_a, DetectConfig(keys=EXP_KEYS, alpha=0.5)).log10_p
        weighted = detect(gen_a, DetectConfig(keys=EXP_KEYS, alpha=0.5, weighting="entropy"),
                          proxy=proxy).log10_p
        return sb, classical, weighted

    rows = []
    for strategy, control, values in grid:
        for value in values:
            payloads = [{"point": (strategy, control, value)} for _ in range(spec.trials)]
            res = np.asarray(run_trials(one, payloads, workers=spec.workers, setup=setup))
            rows.append((strategy, control, value,
                         float(np.median(res[:, 0])),
                         float(np.median(-res[:, 1])),
                         float(np.median(-res[:, 2]))))
    if spec.output:
        write_csv(spec.output, "pareto-sweep",
                  ("strategy", "control", "value", "self_bleu_median",
                   "neglog10p_classical", "neglog10p_entropy"), rows)
    return rows
