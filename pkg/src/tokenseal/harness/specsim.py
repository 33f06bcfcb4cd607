"""Simulated speculative decoding with dual-key watermarking.

Two layers of simulation:

* the draft/target rule with real toy models (low-order draft proposes,
  higher-order target accepts with min(1, p/q), corrections drawn from
  the residual): used to check the acceptance rate is unchanged by
  watermarking, since proposals are marginally ~q either way;
* acceptance-rate routing (accept coin with a fixed rate a; accepted
  tokens watermarked under key 1, corrections under key 2): used to
  sweep the detector across acceptance rates directly.
"""

from __future__ import annotations

import numpy as np

from .. import prf
from ..detect import DetectConfig, detect
from ..generate import sample_prompts
from ..sampling import ProbVector, gumbel_select
from ..toylm import CompiledModel
from .common import (EXP_KEYS, ExperimentSpec, default_model, run_trials, write_csv)

K = 3


def _race(pv: ProbVector, window, key: int) -> int:
    token, _ = gumbel_select(pv, prf.prf_vector(pv.ids, window, key, K))
    return token


def _residual(p: ProbVector, q: ProbVector) -> ProbVector:
    """Normalized max(p - q, 0) on p's support."""
    qmap = dict(zip(q.ids.tolist(), q.probs.tolist()))
    resid = np.array([max(pi - qmap.get(int(i), 0.0), 0.0)
                      for i, pi in zip(p.ids, p.probs)])
    total = resid.sum()
    if total <= 0:
        return p
    keep = resid > 0
    return ProbVector(ids=p.ids[keep], probs=resid[keep] / total)


def speculative_generate(target: CompiledModel, draft: CompiledModel, prompt,
                         n_tokens: int, watermark: bool, keys, seed: int) -> tuple[list[int], float]:
    """Token-level draft-propose/target-verify; returns (tokens, acceptance).

    Repeated watermark contexts fall back to plain sampling (always-on
    masking): the toy models repeat k-grams often enough that keyed
    determinism would otherwise trap trajectories in loops whose
    acceptance profile is unrepresentative.
    """
    rng = np.random.default_rng(seed)
    history = list(prompt)
    seen: set = set()
    accepted = 0
    out = []
    for _ in range(n_tokens):
        window = tuple(history[-K:])
        q = draft.probvector(history)
        p = target.probvector(history)
        keyed = watermark and window not in seen
        if keyed:
            seen.add(window)
            proposal = _race(q, window, keys[0])
        else:
            proposal = int(q.ids[_draw(q.probs, rng)])
        pi = _lookup(p, proposal)
        qi = _lookup(q, proposal)
        if qi > 0 and rng.random() < min(1.0, pi / qi):
            token = proposal
            accepted += 1
        else:
            resid = _residual(p, q)
            if keyed:
                token = _race(resid, window, keys[1])
            else:
                token = int(resid.ids[_draw(resid.probs, rng)])
        history.append(token)
        out.append(token)
    return out, accepted / n_tokens


def _draw(probs: np.ndarray, rng: np.random.Generator) -> int:
    return int(min(np.searchsorted(np.cumsum(probs), rng.random()), probs.size - 1))


def _lookup(pv: ProbVector, token: int) -> float:
    hits = np.flatnonzero(pv.ids == token)
    return float(pv.probs[hits[0]]) if hits.size else 0.0


def routed_generate(target: CompiledModel, prompt, n_tokens: int, accept_rate: float,
                    keys, seed: int) -> list[int]:
    """Acceptance-rate routing: key 1 with probability accept_rate, else
    key 2.  This is dual-key generation with alpha = 1 - accept_rate, so
    the production sampler (with masking) is used directly; the key order
    flips when the rate is below one half to satisfy alpha <= 0.5."""
    from ..generate import generate_sequence
    from ..sampling import SamplerConfig

    if accept_rate >= 0.5:
        cfg = SamplerConfig(strategy="dual_key", keys=tuple(keys),
                            alpha=1.0 - accept_rate, k=K, temperature=1.0,
                            top_p=0.9, repeated_context_masking=True, rng_seed=seed)
    else:
        cfg = SamplerConfig(strategy="dual_key", keys=(keys[1], keys[0]),
                            alpha=accept_rate, k=K, temperature=1.0,
                            top_p=0.9, repeated_context_masking=True, rng_seed=seed)
    return generate_sequence(target, prompt, n_tokens, cfg)


def run_speculative_sim(spec: ExperimentSpec) -> dict:
    """Acceptance invariance (real draft/target) + detection sweep (routing)."""
    accept_rates = spec.grid.get("accept_rates", (0.3, 0.5, 0.7))
    draft_order = spec.grid.get("draft_order", 2)

    def setup():
        model = default_model()
        target = CompiledModel(model, temperature=1.0, top_p=0.9)
        draft_model = default_model(order=draft_order)
        draft = CompiledModel(draft_model, temperature=1.0, top_p=0.9)
        return model, target, draft

    def one_acceptance(i, watermark, shared):
        model, target, draft = shared
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, i]))
        prompt = sample_prompts(model, 1, max(K, model.order), rng)[0]
        # fresh keys per trial: the invariance statement is an expectation
        # over keys, and a fixed pair leaves an O(1/sqrt(contexts)) offset
        keys = (int(rng.integers(2**62)), int(rng.integers(2**62)))
        _, rate = speculative_generate(target, draft, prompt, spec.gen_len,
                                       watermark, keys, int(rng.integers(2**62)))
        return rate

    acc_wm = np.asarray(run_trials(one_acceptance, [True] * spec.trials,
                                   workers=spec.workers, setup=setup))
    acc_plain = np.asarray(run_trials(one_acceptance, [False] * spec.trials,
                                      workers=spec.workers, setup=setup))

    def one_detect(i, rate, shared):
        model, target, _ = shared
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 7, i]))
        prompt = sample_prompts(model, 1, max(K, model.order), rng)[0]
        toks = routed_generate(target, prompt, spec.gen_len, rate, EXP_KEYS,
                               int(rng.integers(2**62)))
        v05 = detect(np.asarray(toks), DetectConfig(keys=EXP_KEYS, alpha=0.5))
        va = detect(np.asarray(toks), DetectConfig(keys=EXP_KEYS,
                                                   alpha=min(1 - rate, 0.5)))
        return v05.log10_p, va.log10_p

    sweep = {}
    for rate in accept_rates:
        res = np.asarray(run_trials(one_detect, [rate] * spec.trials,
                                    workers=spec.workers, setup=setup))
        sweep[rate] = {"median_neglog10p_a05": float(np.median(-res[:, 0])),
                       "median_neglog10p_matched": float(np.median(-res[:, 1]))}

    out = {
        "acceptance_wm_mean": float(acc_wm.mean()),
        "acceptance_plain_mean": float(acc_plain.mean()),
        "acceptance_wm_sd": float(acc_wm.std(ddof=1)),
        "acceptance_plain_sd": float(acc_plain.std(ddof=1)),
        "trials": spec.trials,
        "sweep": sweep,
    }
    if spec.output:
        rows = [("acceptance", "", out["acceptance_wm_mean"], out["acceptance_plain_mean"])]
        rows += [("detect", rate, d["median_neglog10p_a05"], d["median_neglog10p_matched"])
                 for rate, d in sweep.items()]
        write_csv(spec.output, "speculative-sim",
                  ("row", "accept_rate", "value_wm_or_a05", "value_plain_or_matched"), rows)
    return out
