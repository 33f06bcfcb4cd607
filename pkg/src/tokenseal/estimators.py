"""Estimator-style API so the toolkit composes with the scikit ecosystem.

``ToyLanguageModel`` is fit/sample-shaped; the detectors are
predict-shaped over lists of token sequences.  All parameters live in
``__init__`` untouched (sklearn convention), so ``get_params`` /
``set_params`` / ``clone`` work; validation happens at call time.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .detect import DetectConfig, detect
from .generate import compile_model, generate_sequence
from .localize import LocalizeConfig, annotate_boundaries, ensemble_detect
from .radioactive import PredictionStream, radioactivity_pvalue
from .sampling import GenState, SamplerConfig, apply_decoding_filters, step
from .detect import score_tokens
from .toylm import CompiledModel, train_text
from .validation import as_sequence_list, as_token_array, check_key


class ToyLanguageModel(BaseEstimator):
    """Subword n-gram language model with additive smoothing."""

    def __init__(self, order=4, vocab_size=2048, smoothing=3e-5, temperature=1.0,
                 top_p=1.0):
        self.order = order
        self.vocab_size = vocab_size
        self.smoothing = smoothing
        self.temperature = temperature
        self.top_p = top_p

    def fit(self, X, y=None):
        """X: a corpus string or an iterable of strings."""
        corpus = X if isinstance(X, str) else "\n\n".join(X)
        self.model_ = train_text(corpus, order=self.order, vocab_size=self.vocab_size,
                                 smoothing=self.smoothing)
        self.compiled_ = CompiledModel(self.model_, temperature=self.temperature,
                                       top_p=self.top_p)
        return self

    def predict_proba(self, context):
        """Top-p survivor distribution after the configured context."""
        self._check_fitted()
        return self.compiled_.probvector(as_token_array(context, "context"))

    def entropy(self, context) -> float:
        self._check_fitted()
        return self.compiled_.entropy_at(as_token_array(context, "context"))

    def sample(self, context, n_tokens: int, sampler: "WatermarkSampler | None" = None,
               seed: int = 0):
        """Continue a context, optionally through a watermark sampler."""
        self._check_fitted()
        context = list(as_token_array(context, "context"))
        if sampler is None:
            cfg = SamplerConfig(strategy="none", keys=(0,), rng_seed=seed,
                                temperature=self.temperature, top_p=self.top_p)
        else:
            cfg = sampler.config().with_seed(seed)
        comp = compile_model(self.model_, cfg)
        return generate_sequence(comp, context, n_tokens, cfg)

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("call fit() first")


class WatermarkSampler(BaseEstimator):
    """Logits-in, token-out watermark sampler with session state."""

    def __init__(self, strategy="dual_key", key=1, key2=2, alpha=0.1, a=0.3,
                 tau=0.1, k=3, temperature=1.0, top_p=1.0,
                 repeated_context_masking=False, rng_seed=0, depth=10):
        self.strategy = strategy
        self.key = key
        self.key2 = key2
        self.alpha = alpha
        self.a = a
        self.tau = tau
        self.k = k
        self.temperature = temperature
        self.top_p = top_p
        self.repeated_context_masking = repeated_context_masking
        self.rng_seed = rng_seed
        self.depth = depth

    def config(self) -> SamplerConfig:
        keys = (check_key(self.key),)
        if self.strategy == "dual_key":
            keys = (check_key(self.key), check_key(self.key2))
        return SamplerConfig(strategy=self.strategy, keys=keys, alpha=self.alpha,
                             a=self.a, tau=self.tau, k=self.k,
                             temperature=self.temperature, top_p=self.top_p,
                             repeated_context_masking=self.repeated_context_masking,
                             rng_seed=self.rng_seed, depth=self.depth)

    def session(self, history=()) -> GenState:
        return GenState.fresh(self.config(), [int(t) for t in history])

    def process(self, logits, history=None, state: GenState | None = None) -> int:
        """Filter logits, then emit one watermarked token."""
        cfg = self.config()
        if state is None:
            state = GenState.fresh(cfg, [] if history is None else
                                   list(as_token_array(history, "history")))
        pv = apply_decoding_filters(np.asarray(logits, dtype=np.float64),
                                    cfg.temperature, cfg.top_p)
        return step(state, pv, cfg)


class WatermarkDetector(BaseEstimator):
    """Calibrated detector: decision_function returns -log10 p per sequence."""

    def __init__(self, key=1, key2=None, k=3, alpha=0.5, weighting="uniform",
                 method="textseal", depth=10, proxy=None, threshold=4.0):
        self.key = key
        self.key2 = key2
        self.k = k
        self.alpha = alpha
        self.weighting = weighting
        self.method = method
        self.depth = depth
        self.proxy = proxy
        self.threshold = threshold

    def config(self) -> DetectConfig:
        keys = (check_key(self.key),) if self.key2 is None else \
            (check_key(self.key), check_key(self.key2))
        return DetectConfig(keys=keys, k=self.k,
                            alpha=self.alpha if len(keys) > 1 else 0.0,
                            weighting=self.weighting, method=self.method,
                            depth=self.depth)

    def fit(self, X=None, y=None):
        return self

    def decision_function(self, X) -> np.ndarray:
        cfg = self.config()
        return np.array([-detect(seq, cfg, proxy=self.proxy).log10_p
                         for seq in as_sequence_list(X)])

    def predict(self, X) -> np.ndarray:
        return self.decision_function(X) >= self.threshold

    def verdicts(self, X):
        cfg = self.config()
        return [detect(seq, cfg, proxy=self.proxy) for seq in as_sequence_list(X)]


class WatermarkLocalizer(BaseEstimator):
    """Region finder; transform() yields per-token annotation masks."""

    def __init__(self, key=1, key2=None, k=3, alpha=0.5, L_min=50, Y_max=5,
                 top_c=32, annot_window=50, annot_tau=0.5):
        self.key = key
        self.key2 = key2
        self.k = k
        self.alpha = alpha
        self.L_min = L_min
        self.Y_max = Y_max
        self.top_c = top_c
        self.annot_window = annot_window
        self.annot_tau = annot_tau

    def _series(self, tokens):
        keys = (check_key(self.key),) if self.key2 is None else \
            (check_key(self.key), check_key(self.key2))
        alpha = self.alpha if len(keys) > 1 else 0.0
        return score_tokens(as_token_array(tokens), keys, self.k, alpha)

    def _config(self) -> LocalizeConfig:
        return LocalizeConfig(L_min=self.L_min, Y_max=self.Y_max, top_c=self.top_c,
                              annot_window=self.annot_window, annot_tau=self.annot_tau)

    def predict(self, tokens):
        """EnsembleVerdict for one token sequence."""
        return ensemble_detect(self._series(tokens), self._config())

    def transform(self, X):
        return [annotate_boundaries(self._series(seq), self._config())
                for seq in as_sequence_list(X)]


class RadioactivityDetector(BaseEstimator):
    """Aggregates teacher-forced student predictions into one p-value."""

    def __init__(self, key=1, key2=None, alpha=0.1, weighting="sqrt_norm", beta=1.0):
        self.key = key
        self.key2 = key2
        self.alpha = alpha
        self.weighting = weighting
        self.beta = beta

    def verdict(self, streams: list[PredictionStream]):
        keys = (check_key(self.key),) if self.key2 is None else \
            (check_key(self.key), check_key(self.key2))
        return radioactivity_pvalue(streams, keys,
                                    alpha=self.alpha if len(keys) > 1 else 0.0,
                                    weighting=self.weighting, beta=self.beta)

    def decision_function(self, streams_list) -> np.ndarray:
        return np.array([-self.verdict(streams).log10_p for streams in streams_list])
