"""Desk-scale text source: a smoothed n-gram model over subword units.

Stands in for a real LLM in every statistical experiment.  What matters
for those experiments is that next-token distributions are full-support
(additive smoothing), have a realistic mix of low- and high-entropy
positions (word interiors vs word boundaries), and are deterministic
given the training corpus.

``train_ngram`` works on any symbol sequence (a raw string is treated as
characters).  The production path is ``train_text``, which first learns a
greedy longest-match subword inventory so survivor sets under nucleus
sampling have realistic sizes.

``CompiledModel`` is the hot-loop view: per-context rows with sorted
successor arrays, lazily cached top-p slices, closed-form entropies, and
a two-part sampler (observed successors vs the smoothed uniform tail)
that never materializes vocabulary-sized vectors.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .sampling import ProbVector

MODEL_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# synthetic corpus


def build_synthetic_corpus(n_chars: int = 1_500_000, seed: int = 0) -> str:
    """Deterministic pseudo-English corpus with word-bigram structure.

    Replaces a bundled public-domain text (nothing suitable ships in this
    environment); gives the same statistical shape: predictable word
    interiors and collocations, higher-entropy word boundaries,
    punctuation and paragraph structure.  Words follow a sparse Markov
    chain (each word strongly prefers a handful of successors) over a
    Zipf background, so trained n-gram models see genuinely mixed
    per-position entropy.
    """
    rng = np.random.default_rng(seed)
    onsets = ["b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r",
              "s", "t", "v", "w", "br", "ch", "cl", "dr", "fl", "gr", "pl",
              "pr", "sh", "sl", "st", "str", "th", "tr"]
    nuclei = ["a", "e", "i", "o", "u", "ai", "ea", "ee", "io", "ou"]
    codas = ["", "", "", "n", "r", "s", "t", "l", "d", "m", "ck", "ng", "st", "nd"]

    words = set()
    while len(words) < 900:
        n_syll = int(rng.integers(1, 4))
        w = "".join(
            onsets[int(rng.integers(len(onsets)))]
            + nuclei[int(rng.integers(len(nuclei)))]
            + (codas[int(rng.integers(len(codas)))] if s == n_syll - 1 else "")
            for s in range(n_syll)
        )
        if 2 <= len(w) <= 11:
            words.add(w)
    function_words = ["the", "of", "and", "to", "a", "in", "is", "was", "for",
                      "with", "as", "on", "by", "at", "from", "that", "it"]
    lexicon = function_words + sorted(words)
    n_lex = len(lexicon)
    ranks = np.arange(1, n_lex + 1, dtype=np.float64)
    zipf = ranks ** -1.1
    zipf /= zipf.sum()

    # sparse word-bigram chain: each word prefers 2..5 successors
    succ_ids = []
    succ_probs = []
    for _ in range(n_lex):
        m = int(rng.integers(2, 6))
        ids = rng.choice(n_lex, size=m, replace=False, p=zipf)
        raw = rng.dirichlet(np.full(m, 0.8))
        succ_ids.append(ids)
        succ_probs.append(raw)
    mix = 0.82  # probability of following the chain vs the Zipf background

    out: list[str] = []
    total = 0
    sentence_left = int(rng.integers(4, 9))
    word = int(rng.integers(n_lex))
    while total < n_chars:
        n_words = int(rng.integers(6, 19))
        toks: list[str] = []
        for i in range(n_words):
            if rng.random() < mix:
                j = int(rng.choice(len(succ_ids[word]), p=succ_probs[word]))
                word = int(succ_ids[word][j])
            else:
                word = int(rng.choice(n_lex, p=zipf))
            toks.append(lexicon[word])
            if 0 < i < n_words - 1 and rng.random() < 0.05:
                toks[-1] += ","
        sent = " ".join(toks)
        sent = sent[0].upper() + sent[1:]
        end = "." if rng.random() < 0.85 else ("?" if rng.random() < 0.5 else "!")
        sent += end
        sentence_left -= 1
        if sentence_left == 0:
            sent += "\n\n"
            sentence_left = int(rng.integers(4, 9))
        else:
            sent += " "
        out.append(sent)
        total += len(sent)
    return "".join(out)[:n_chars]


# ---------------------------------------------------------------------------
# subword tokenizer


class SubwordTokenizer:
    """Greedy longest-match tokenizer over a learned substring inventory."""

    def __init__(self, vocab: Sequence[str]):
        self.vocab = list(vocab)
        self.token_to_id = {t: i for i, t in enumerate(self.vocab)}
        self.max_len = max(len(t) for t in self.vocab)

    @classmethod
    def learn(cls, corpus: str, vocab_size: int = 2048, max_len: int = 4) -> "SubwordTokenizer":
        if not corpus:
            raise ValueError("empty corpus")
        if vocab_size > 4096:
            raise ValueError("vocab_size capped at 4096")
        chars = sorted(set(corpus))
        counts: Counter[str] = Counter()
        for ln in range(2, max_len + 1):
            for i in range(0, len(corpus) - ln + 1, 1):
                counts[corpus[i : i + ln]] += 1
        budget = max(vocab_size - len(chars), 0)
        # favor frequent-and-long units; ties resolved lexicographically
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1] * len(kv[0]), kv[0]))
        multi = [s for s, c in ranked[:budget] if c >= 4]
        return cls(chars + multi)

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        i = 0
        n = len(text)
        t2i = self.token_to_id
        while i < n:
            for ln in range(min(self.max_len, n - i), 0, -1):
                tid = t2i.get(text[i : i + ln])
                if tid is not None:
                    ids.append(tid)
                    i += ln
                    break
            else:
                raise ValueError(f"character {text[i]!r} not in vocabulary")
        return ids

    def decode(self, ids: Sequence[int]) -> str:
        return "".join(self.vocab[i] for i in ids)


# ---------------------------------------------------------------------------
# n-gram model


@dataclass
class ToyModel:
    order: int
    vocab: list[str]
    smoothing: float
    counts: dict[tuple[int, ...], dict[int, int]]
    tokenizer: SubwordTokenizer | None = None

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def save(self, path: str) -> None:
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "order": self.order,
            "smoothing": self.smoothing,
            "vocab": self.vocab,
            "counts": {
                ",".join(map(str, ctx)): sorted(succ.items())
                for ctx, succ in self.counts.items()
            },
        }
        with open(path, "w") as f:
            json.dump(payload, f)

    @classmethod
    def load(cls, path: str) -> "ToyModel":
        with open(path) as f:
            payload = json.load(f)
        if payload.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError("unsupported model file version")
        counts = {
            tuple(int(x) for x in key.split(",")) if key else (): {int(t): int(c) for t, c in succ}
            for key, succ in payload["counts"].items()
        }
        model = cls(order=payload["order"], vocab=payload["vocab"],
                    smoothing=payload["smoothing"], counts=counts)
        model.tokenizer = SubwordTokenizer(model.vocab)
        return model


def train_ngram(corpus: Sequence, order: int, smoothing: float = 1e-3,
                vocab: Sequence | None = None) -> ToyModel:
    """Maximum-likelihood n-gram counts with additive smoothing.

    ``corpus`` is any symbol sequence; a string is treated as characters.
    ``order`` is the context length (0 trains a unigram model).
    """
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    if order < 0:
        raise ValueError("order must be >= 0")
    if smoothing <= 0:
        raise ValueError("smoothing must be positive")
    symbols = list(corpus)
    vocab_syms = sorted(set(symbols) | set(vocab or ()), key=str)
    sym_to_id = {s: i for i, s in enumerate(vocab_syms)}
    ids = [sym_to_id[s] for s in symbols]
    counts: dict[tuple[int, ...], dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for t in range(order, len(ids)):
        counts[tuple(ids[t - order : t])][ids[t]] += 1
    model = ToyModel(order=order, vocab=[str(s) for s in vocab_syms], smoothing=smoothing,
                     counts={c: dict(s) for c, s in counts.items()})
    return model


def train_text(corpus: str, order: int = 4, smoothing: float = 1e-3,
               vocab_size: int = 2048) -> ToyModel:
    """Subword pipeline: learn the tokenizer, then train the n-gram model."""
    tok = SubwordTokenizer.learn(corpus, vocab_size=vocab_size)
    ids = tok.encode(corpus)
    counts: dict[tuple[int, ...], dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for t in range(order, len(ids)):
        counts[tuple(ids[t - order : t])][ids[t]] += 1
    model = ToyModel(order=order, vocab=list(tok.vocab), smoothing=smoothing,
                     counts={c: dict(s) for c, s in counts.items()})
    model.tokenizer = tok
    return model


def next_dist(model: ToyModel, context: Sequence[int], temperature: float = 1.0) -> ProbVector:
    """Tempered full-support next-token distribution for a context."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    V = model.vocab_size
    ctx = tuple(int(c) for c in context)
    if len(ctx) < model.order:
        raise ValueError(f"context must have >= order={model.order} tokens")
    ctx = ctx[len(ctx) - model.order:] if model.order else ()
    for c in ctx:
        if not 0 <= c < V:
            raise ValueError(f"unknown token id {c}")
    weights = np.full(V, model.smoothing)
    for tid, cnt in model.counts.get(ctx, {}).items():
        weights[tid] += cnt
    logw = np.log(weights) / temperature
    logw -= logw.max()
    p = np.exp(logw)
    p /= p.sum()
    return ProbVector(ids=np.arange(V), probs=p)


def entropy(probs: ProbVector) -> float:
    """Shannon entropy in nats."""
    return probs.entropy()


# ---------------------------------------------------------------------------
# compiled hot-loop view


@dataclass
class _Row:
    succ_ids: np.ndarray       # observed successors, tempered weight descending
    succ_w: np.ndarray         # tempered weights of observed successors
    excess_cum: np.ndarray     # cumsum of (succ_w - base), for two-part sampling
    base: float                # tempered weight of an unobserved token
    total: float               # partition sum over the full vocabulary
    entropy: float


class CompiledModel:
    """Per-(model, temperature) arrays for fast stepping.

    Exposes the same distributions as ``next_dist`` (verified by tests)
    but samples in O(log successors) and caches top-p survivor slices.
    """

    def __init__(self, model: ToyModel, temperature: float = 1.0, top_p: float = 1.0):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 < top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        self.model = model
        self.temperature = temperature
        self.top_p = top_p
        self.order = model.order
        self.vocab_size = model.vocab_size
        self._rows: dict[tuple[int, ...], _Row] = {}
        self._slices: dict[tuple[int, ...], ProbVector] = {}
        self._fast_lists: dict[tuple[int, ...], tuple] = {}
        # contexts unseen in training share one generic row/slice so a
        # wandering trajectory cannot grow the caches without bound
        self._generic_row: _Row | None = None
        self._generic_slice: ProbVector | None = None
        self._generic_fast: tuple | None = None

    def _row(self, ctx: tuple[int, ...]) -> _Row:
        row = self._rows.get(ctx)
        if row is not None:
            return row
        model = self.model
        succ = model.counts.get(ctx)
        if succ is None:
            if self._generic_row is None:
                self._generic_row = self._build_row({})
            return self._generic_row
        row = self._build_row(succ)
        self._rows[ctx] = row
        return row

    def _build_row(self, succ: dict[int, int]) -> _Row:
        model = self.model
        V = model.vocab_size
        invT = 1.0 / self.temperature
        base = model.smoothing ** invT
        if succ:
            ids = np.fromiter(succ.keys(), dtype=np.int64, count=len(succ))
            w = (np.fromiter(succ.values(), dtype=np.float64, count=len(succ))
                 + model.smoothing) ** invT
            order = np.lexsort((ids, -w))
            ids, w = ids[order], w[order]
        else:
            ids = np.empty(0, dtype=np.int64)
            w = np.empty(0, dtype=np.float64)
        total = float(w.sum()) + base * (V - ids.size)
        p_obs = w / total
        p_base = base / total
        ent = float(-(p_obs * np.log(p_obs)).sum())
        if V > ids.size and p_base > 0:
            ent -= (V - ids.size) * p_base * np.log(p_base)
        return _Row(succ_ids=ids, succ_w=w, excess_cum=np.cumsum(w - base),
                    base=base, total=total, entropy=ent)

    def _ctx(self, history: Sequence[int]) -> tuple[int, ...]:
        if len(history) < self.order:
            raise ValueError(f"need >= order={self.order} tokens of context")
        return tuple(int(t) for t in history[len(history) - self.order:])

    def entropy_at(self, history: Sequence[int]) -> float:
        """Entropy (nats) of the unfiltered tempered distribution."""
        return self._row(self._ctx(history)).entropy

    def sample(self, history: Sequence[int], rng: np.random.Generator) -> int:
        """True-random draw from the full tempered distribution."""
        row = self._row(self._ctx(history))
        u = rng.random() * row.total
        excess_total = row.excess_cum[-1] if row.excess_cum.size else 0.0
        if u < excess_total:
            return int(row.succ_ids[np.searchsorted(row.excess_cum, u, side="right")])
        # uniform tail over the whole vocabulary
        return int((u - excess_total) // row.base) % self.vocab_size

    def stream_tokens(self, prompt: Sequence[int], n_tokens: int,
                      rng: np.random.Generator) -> np.ndarray:
        """Fast unwatermarked continuation under this view's decoding
        filters (tight loop for null corpora).

        Distribution-identical to drawing from ``probvector`` at every
        step; only the bookkeeping differs.
        """
        from bisect import bisect_right

        order = self.order
        ctx = tuple(int(t) for t in prompt[len(prompt) - order:])
        if len(ctx) < order:
            raise ValueError(f"need >= order={order} tokens of context")
        out = np.empty(n_tokens, dtype=np.int64)
        lists = self._fast_lists
        counts = self.model.counts
        uniforms = rng.random(n_tokens)
        for i in range(n_tokens):
            if ctx in counts:
                cached = lists.get(ctx)
                if cached is None:
                    pv = self.probvector(ctx)
                    cached = (np.cumsum(pv.probs).tolist(), pv.ids.tolist())
                    lists[ctx] = cached
            else:
                if self._generic_fast is None:
                    pv = self.probvector(ctx)
                    self._generic_fast = (np.cumsum(pv.probs).tolist(), pv.ids.tolist())
                cached = self._generic_fast
            cum, ids = cached
            tok = ids[min(bisect_right(cum, uniforms[i]), len(ids) - 1)]
            out[i] = tok
            ctx = ctx[1:] + (tok,) if order else ()
        return out

    def probvector(self, history: Sequence[int]) -> ProbVector:
        """Top-p survivor distribution (cached per context)."""
        ctx = self._ctx(history)
        unseen = ctx not in self.model.counts
        if unseen and self._generic_slice is not None:
            return self._generic_slice
        pv = self._slices.get(ctx)
        if pv is not None:
            return pv
        row = self._row(ctx)
        V = self.vocab_size
        p_base = row.base / row.total
        probs_obs = row.succ_w / row.total
        if self.top_p >= 1.0:
            ids = np.concatenate([row.succ_ids,
                                  np.setdiff1d(np.arange(V), row.succ_ids)])
            probs = np.concatenate([probs_obs,
                                    np.full(V - row.succ_ids.size, p_base)])
        else:
            cum = np.cumsum(probs_obs)
            mass_obs = float(cum[-1]) if cum.size else 0.0
            if cum.size and cum[-1] >= self.top_p - 1e-12:
                cut = int(np.searchsorted(cum, self.top_p - 1e-12)) + 1
                ids, probs = row.succ_ids[:cut], probs_obs[:cut]
            else:
                # nucleus reaches into the uniform tail: take unobserved ids
                # in ascending order until the mass threshold is crossed
                need = self.top_p - mass_obs
                n_tail = min(int(np.ceil(need / p_base - 1e-12)), V - row.succ_ids.size)
                tail_ids = np.setdiff1d(np.arange(V), row.succ_ids)[:n_tail]
                ids = np.concatenate([row.succ_ids, tail_ids])
                probs = np.concatenate([probs_obs, np.full(n_tail, p_base)])
        pv = ProbVector(ids=ids, probs=probs / probs.sum())
        if unseen:
            self._generic_slice = pv
        else:
            self._slices[ctx] = pv
        return pv
