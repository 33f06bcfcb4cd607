"""tokenseal: distortion-free dual-key statistical watermarking for token
streams, with calibrated detection, localization, and radioactivity tests."""

from .constants import CONSTANTS_VERSION, K_MAX
from .detect import DetectConfig, DetectionVerdict, ScoreSeries, detect, score_tokens
from .estimators import (RadioactivityDetector, ToyLanguageModel, WatermarkDetector,
                         WatermarkLocalizer, WatermarkSampler)
from .localize import EnsembleVerdict, LocalizeConfig, Region, ensemble_detect
from .prf import hash_raw, prf_uniform, prf_vector
from .sampling import GenState, ProbVector, SamplerConfig, apply_decoding_filters, step
from .toylm import ToyModel, build_synthetic_corpus, train_ngram, train_text
from .tournament import TournamentConfig, synthid_detect, tournament_sample

__version__ = "0.1.0"

__all__ = [
    "CONSTANTS_VERSION", "K_MAX", "__version__",
    "DetectConfig", "DetectionVerdict", "ScoreSeries", "detect", "score_tokens",
    "EnsembleVerdict", "LocalizeConfig", "Region", "ensemble_detect",
    "hash_raw", "prf_uniform", "prf_vector",
    "GenState", "ProbVector", "SamplerConfig", "apply_decoding_filters", "step",
    "ToyModel", "build_synthetic_corpus", "train_ngram", "train_text",
    "TournamentConfig", "synthid_detect", "tournament_sample",
    "ToyLanguageModel", "WatermarkSampler", "WatermarkDetector",
    "WatermarkLocalizer", "RadioactivityDetector",
]
