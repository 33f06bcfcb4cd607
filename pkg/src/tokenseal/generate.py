"""Sequence generation: toy model + watermarked sampling strategies."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .sampling import GenState, SamplerConfig, step
from .tournament import TournamentConfig, tournament_sample
from .toylm import CompiledModel, ToyModel


def compile_model(model: ToyModel, config: SamplerConfig) -> CompiledModel:
    return CompiledModel(model, temperature=config.temperature, top_p=config.top_p)


def generate_sequence(compiled: CompiledModel, prompt: Sequence[int], n_tokens: int,
                      config: SamplerConfig, state: GenState | None = None) -> list[int]:
    """Generate ``n_tokens`` continuation tokens after ``prompt``.

    The prompt must cover both the model order and the watermark window.
    Returns only the generated continuation.
    """
    prompt = [int(t) for t in prompt]
    if len(prompt) < max(compiled.order, config.k):
        raise ValueError("prompt shorter than model order / watermark window")
    if state is None:
        state = GenState.fresh(config, prompt)
    if config.strategy == "synthid":
        tcfg = TournamentConfig(key=config.keys[0], depth=config.depth, k=config.k)
        out: list[int] = []
        for _ in range(n_tokens):
            pv = compiled.probvector(state.history)
            window = tuple(state.history[-config.k:])
            token = tournament_sample(pv, window, tcfg, state.rng)
            state.history.append(token)
            out.append(token)
        return out
    out = []
    for _ in range(n_tokens):
        pv = compiled.probvector(state.history)
        out.append(step(state, pv, config))
    return out


def sample_prompts(model: ToyModel, n_prompts: int, prompt_len: int,
                   rng: np.random.Generator) -> list[list[int]]:
    """Draw prompts as slices of contexts the model has actually seen."""
    contexts = list(model.counts.keys())
    if not contexts:
        raise ValueError("model has no contexts")
    need = max(prompt_len, model.order)
    prompts = []
    for _ in range(n_prompts):
        ctx = contexts[int(rng.integers(len(contexts)))]
        pad = list(ctx)
        while len(pad) < need:
            pad = list(contexts[int(rng.integers(len(contexts)))]) + pad
        prompts.append(pad[-need:])
    return prompts
