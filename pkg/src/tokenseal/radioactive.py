"""Teacher-forcing radioactivity test: did a student model train on
watermarked traces?

Each trace is a watermarked teacher output; the student's top-1
prediction is recorded at every position given the ground-truth prefix.
Predictions are scored with the watermark PRF, deduplicated at two
levels, entropy-weighted, and aggregated into one calibrated p-value.

The two dedup levels guard different failure modes: within a trace each
context window is scored once (a high-score n-gram already present in
the prefix can be copied through attention, which is signal about the
*input*, not about learned bias); across traces each (context,
prediction) tuple is counted once (the PRF is deterministic, so repeats
are not independent evidence).

A real distillation pipeline is out of scope; ``simulate_student``
produces a student whose internalization strength is an explicit dial,
which is exactly what the statistical test needs to be validated
against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import prf
from .detect import DetectionVerdict
from .stats import weighted_gamma_log10_sf

WEIGHTING_KINDS = ("uniform", "sqrt_norm", "log_norm", "linear_norm", "tanh_norm", "power")


@dataclass
class PredictionStream:
    """One trace's teacher-forced predictions.

    contexts are built from teacher tokens (never from student output);
    entropies come from the student's own forward distribution.
    """

    contexts: list[tuple[int, ...]]
    predictions: list[int]
    entropies: list[float]

    def __post_init__(self):
        if not (len(self.contexts) == len(self.predictions) == len(self.entropies)):
            raise ValueError("stream fields must align")


def dedup_two_level(streams: Sequence[PredictionStream]) -> list[np.ndarray]:
    """Validity masks: first occurrence of each context within a trace,
    then first global occurrence of each (context, prediction) tuple."""
    masks: list[np.ndarray] = []
    seen_global: set = set()
    for stream in streams:
        mask = np.zeros(len(stream.predictions), dtype=bool)
        seen_local: set = set()
        for i, (ctx, pred) in enumerate(zip(stream.contexts, stream.predictions)):
            if ctx in seen_local:
                continue
            seen_local.add(ctx)
            tup = (ctx, pred)
            if tup in seen_global:
                continue
            seen_global.add(tup)
            mask[i] = True
        masks.append(mask)
    return masks


def entropy_weight_fn(H: np.ndarray, h_min: float, h_max: float, kind: str,
                      beta: float = 1.0) -> np.ndarray:
    """Selectable weighting functions for the entropy ablation.

    Normalized kinds map H to [0,1], apply the transform, and anchor to
    [0.1, 1.0]; power kinds return raw H**beta without anchoring.
    """
    h = np.asarray(H, dtype=np.float64)
    if np.any(h < 0):
        raise ValueError("entropies must be non-negative")
    if kind == "uniform":
        return np.ones_like(h)
    if kind == "power":
        return h ** beta
    if h_max - h_min < 1e-9:
        return np.ones_like(h)
    hn = np.clip((h - h_min) / (h_max - h_min), 0.0, 1.0)
    if kind == "sqrt_norm":
        f = np.sqrt(hn)
    elif kind == "log_norm":
        f = np.log1p(9.0 * hn) / np.log(10.0)
    elif kind == "linear_norm":
        f = hn
    elif kind == "tanh_norm":
        f = np.tanh(2.0 * hn) / np.tanh(2.0)
    else:
        raise ValueError(f"unknown weighting kind {kind!r}")
    return 0.1 + 0.9 * f


def radioactivity_pvalue(streams: Sequence[PredictionStream], keys: Sequence[int],
                         alpha: float = 0.0, weighting: str = "uniform",
                         beta: float = 1.0,
                         dedup_within_trace: bool = True) -> DetectionVerdict:
    """Score valid predictions with the early-fusion watermark score and
    aggregate into a moment-matched Gamma p-value.

    ``dedup_within_trace=False`` exists only so tests can demonstrate why
    the within-trace level is required for soundness.
    """
    if weighting not in WEIGHTING_KINDS:
        raise ValueError(f"unknown weighting kind {weighting!r}")
    if dedup_within_trace:
        masks = dedup_two_level(streams)
    else:
        masks = _dedup_global_only(streams)
    if len(keys) == 1:
        alpha = 0.0

    scores: list[float] = []
    ents: list[float] = []
    for stream, mask in zip(streams, masks):
        for i in np.flatnonzero(mask):
            ctx = stream.contexts[i]
            pred = stream.predictions[i]
            s1 = -np.log1p(-prf.prf_uniform(pred, ctx, keys[0]))
            if len(keys) >= 2:
                s2 = -np.log1p(-prf.prf_uniform(pred, ctx, keys[1]))
            else:
                s2 = 0.0
            scores.append((1.0 - alpha) * s1 + alpha * s2)
            ents.append(stream.entropies[i])
    if not scores:
        raise ValueError("no valid scored tokens after deduplication")

    s = np.asarray(scores)
    h = np.asarray(ents)
    if weighting == "uniform":
        w = np.ones_like(s)
    elif weighting in ("sqrt_norm", "log_norm", "linear_norm", "tanh_norm"):
        w = entropy_weight_fn(h, float(h.min()), float(h.max()), weighting)
    else:
        w = entropy_weight_fn(h, float(h.min()), float(h.max()), "power", beta)
        if np.all(w < 1e-12):
            w = np.ones_like(s)
    theta_r = alpha**2 + (1.0 - alpha) ** 2
    S = float(np.dot(w, s))
    tail = weighted_gamma_log10_sf(S, w, theta_r, alpha)
    return DetectionVerdict(statistic=S, log10_p=tail.log10_p, n_valid=s.size,
                            k_new=tail.k_new, theta_new=tail.theta_new,
                            method=f"radioactivity-{weighting}")


def _dedup_global_only(streams: Sequence[PredictionStream]) -> list[np.ndarray]:
    masks = []
    seen: set = set()
    for stream in streams:
        mask = np.zeros(len(stream.predictions), dtype=bool)
        for i, (ctx, pred) in enumerate(zip(stream.contexts, stream.predictions)):
            tup = (ctx, pred)
            if tup not in seen:
                seen.add(tup)
                mask[i] = True
        masks.append(mask)
    return masks


def simulate_student(compiled, traces: Sequence[Sequence[int]], beta: float,
                     keys: Sequence[int], k: int,
                     rng: np.random.Generator) -> list[PredictionStream]:
    """Teacher-force a synthetic student over watermarked traces.

    With probability ``beta`` the student has internalized the watermark
    and predicts the key-1 exponential-race winner under its own
    distribution; otherwise it samples its distribution directly.
    Entropies are the student's full-distribution entropies.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must be in [0, 1]")
    streams: list[PredictionStream] = []
    for trace in traces:
        trace = list(int(t) for t in trace)
        contexts: list[tuple[int, ...]] = []
        preds: list[int] = []
        ents: list[float] = []
        start = max(k, compiled.order)
        for t in range(start, len(trace)):
            window = tuple(trace[t - k : t])
            pv = compiled.probvector(trace[:t])
            if rng.random() < beta:
                r = prf.prf_vector(pv.ids, window, keys[0], k)
                z = -np.log(r) / pv.probs
                pred = int(pv.ids[int(np.argmin(z))])
            else:
                pred = compiled.sample(trace[:t], rng)
            contexts.append(window)
            preds.append(pred)
            ents.append(compiled.entropy_at(trace[:t]))
        streams.append(PredictionStream(contexts=contexts, predictions=preds, entropies=ents))
    return streams
