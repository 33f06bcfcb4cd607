import numpy as np
import pytest

from tokenseal import prf
from tokenseal.radioactive import (PredictionStream, dedup_two_level,
                                   entropy_weight_fn, radioactivity_pvalue,
                                   simulate_student)


def make_stream(pairs, entropies=None):
    ctxs = [p[0] for p in pairs]
    preds = [p[1] for p in pairs]
    ents = entropies or [1.0] * len(pairs)
    return PredictionStream(contexts=ctxs, predictions=preds, entropies=ents)


def brute_force_two_level(streams):
    masks = []
    seen_global = set()
    for s in streams:
        seen_ctx = set()
        mask = []
        for ctx, pred in zip(s.contexts, s.predictions):
            if ctx in seen_ctx:
                mask.append(False)
                continue
            seen_ctx.add(ctx)
            if (ctx, pred) in seen_global:
                mask.append(False)
                continue
            seen_global.add((ctx, pred))
            mask.append(True)
        masks.append(np.array(mask))
    return masks


class TestDedup:
    def test_all_distinct_contexts_valid(self):
        s = make_stream([((1, 2, 3), 4), ((2, 3, 4), 5), ((3, 4, 5), 6)])
        assert dedup_two_level([s])[0].all()

    def test_repeat_within_trace_invalid(self):
        s = make_stream([((1, 2, 3), 4), ((1, 2, 3), 9)])
        mask = dedup_two_level([s])[0]
        assert mask.tolist() == [True, False]

    def test_cross_trace_tuple_invalid(self):
        a = make_stream([((1, 2, 3), 4)])
        b = make_stream([((1, 2, 3), 4), ((9, 9, 9), 1)])
        masks = dedup_two_level([a, b])
        assert masks[0].tolist() == [True]
        assert masks[1].tolist() == [False, True]

    def test_cross_trace_same_context_new_prediction_valid(self):
        a = make_stream([((1, 2, 3), 4)])
        b = make_stream([((1, 2, 3), 5)])
        masks = dedup_two_level([a, b])
        assert masks[1].tolist() == [True]

    def test_matches_brute_force_on_random_corpus(self):
        rng = np.random.default_rng(0)
        streams = []
        for _ in range(20):
            pairs = [(tuple(rng.integers(0, 4, 3)), int(rng.integers(0, 6)))
                     for _ in range(rng.integers(1, 60))]
            streams.append(make_stream(pairs))
        got = dedup_two_level(streams)
        want = brute_force_two_level(streams)
        for g, w in zip(got, want):
            assert (g == w).all()


class TestWeightFn:
    def test_sqrt_anchor_at_one(self):
        w = entropy_weight_fn(np.array([2.0]), 0.0, 2.0, "sqrt_norm")
        assert w[0] == pytest.approx(1.0)

    def test_sqrt_anchor_at_zero(self):
        w = entropy_weight_fn(np.array([0.0]), 0.0, 2.0, "sqrt_norm")
        assert w[0] == pytest.approx(0.1)

    def test_power_beta_one_identity(self):
        h = np.array([0.3, 1.7, 2.5])
        assert np.allclose(entropy_weight_fn(h, 0.0, 3.0, "power", beta=1.0), h)

    def test_all_kinds_monotone(self):
        h = np.linspace(0.0, 3.0, 20)
        for kind in ("sqrt_norm", "log_norm", "linear_norm", "tanh_norm"):
            w = entropy_weight_fn(h, 0.0, 3.0, kind)
            assert np.all(np.diff(w) > 0)
            assert w[0] == pytest.approx(0.1)
            assert w[-1] == pytest.approx(1.0)

    def test_negative_entropy_rejected(self):
        with pytest.raises(ValueError):
            entropy_weight_fn(np.array([-1.0]), 0.0, 1.0, "sqrt_norm")

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            entropy_weight_fn(np.array([1.0]), 0.0, 1.0, "cubic")


@pytest.fixture(scope="module")
def teacher_setup(toy_model):
    from tokenseal.generate import compile_model, generate_sequence, sample_prompts
    from tokenseal.harness.common import EXP_KEYS, default_sampler_config
    cfg = default_sampler_config()
    comp = compile_model(toy_model, cfg)
    rng = np.random.default_rng(42)
    traces = []
    for i in range(10):
        prompt = sample_prompts(toy_model, 1, 4, rng)[0]
        traces.append(prompt + generate_sequence(comp, prompt, 110, cfg.with_seed(i)))
    return comp, traces, EXP_KEYS


class TestSimulatedStudent:
    def test_beta_zero_calibrated(self, teacher_setup):
        comp, traces, keys = teacher_setup
        pvals = []
        for i in range(30):
            rng = np.random.default_rng(100 + i)
            streams = simulate_student(comp, traces, 0.0, keys, 3, rng)
            v = radioactivity_pvalue(streams, keys, alpha=0.1, weighting="uniform")
            pvals.append(10 ** v.log10_p)
        pvals = np.array(pvals)
        # uniform-ish: no mass collapse at either end
        assert np.median(pvals) > 0.05
        assert (pvals < 0.01).mean() <= 0.1

    def test_monotone_in_beta(self, teacher_setup):
        comp, traces, keys = teacher_setup
        med = {}
        for beta in (0.0, 0.25, 0.5, 1.0):
            lps = []
            for i in range(6):
                rng = np.random.default_rng(i)
                streams = simulate_student(comp, traces, beta, keys, 3, rng)
                lps.append(-radioactivity_pvalue(streams, keys, alpha=0.1).log10_p)
            med[beta] = np.median(lps)
        assert med[0.0] <= med[0.25] <= med[0.5] <= med[1.0]

    def test_signal_grows_with_token_count(self, teacher_setup):
        comp, traces, keys = teacher_setup
        rng = np.random.default_rng(5)
        full = simulate_student(comp, traces, 1.0, keys, 3, rng)
        small = full[:3]
        v_small = radioactivity_pvalue(small, keys, alpha=0.1)
        v_full = radioactivity_pvalue(full, keys, alpha=0.1)
        assert v_full.log10_p < v_small.log10_p * 1.5  # superlinear in traces

    def test_all_weighting_kinds_calibrated_at_beta_zero(self, teacher_setup):
        comp, traces, keys = teacher_setup
        for kind, beta in [("uniform", 1.0), ("sqrt_norm", 1.0), ("log_norm", 1.0),
                           ("linear_norm", 1.0), ("tanh_norm", 1.0),
                           ("power", 0.5), ("power", 1.0), ("power", 1.5)]:
            pvals = []
            for i in range(12):
                rng = np.random.default_rng(300 + i)
                streams = simulate_student(comp, traces[:5], 0.0, keys, 3, rng)
                v = radioactivity_pvalue(streams, keys, alpha=0.1, weighting=kind,
                                         beta=beta)
                pvals.append(10 ** v.log10_p)
            pvals = np.array(pvals)
            assert np.median(pvals) > 0.03, (kind, beta, np.median(pvals))
            assert (pvals < 1e-3).mean() <= 0.15, (kind, beta)

    def test_sqrt_weighting_beats_uniform(self, teacher_setup):
        comp, traces, keys = teacher_setup
        diffs = []
        for i in range(8):
            rng = np.random.default_rng(200 + i)
            streams = simulate_student(comp, traces, 0.5, keys, 3, rng)
            u = radioactivity_pvalue(streams, keys, alpha=0.1, weighting="uniform")
            s = radioactivity_pvalue(streams, keys, alpha=0.1, weighting="sqrt_norm")
            diffs.append(s.log10_p - u.log10_p)
        assert np.median(diffs) < 0


class TestCopyAttackSoundness:
    def test_within_trace_dedup_required(self):
        # copy-through-attention: at a context's FIRST occurrence the
        # oblivious student predicts an ordinary token; once the teacher's
        # high-PRF continuation is in the prefix, later occurrences copy it.
        # That copied pair is a new (context, prediction) tuple, so global
        # dedup alone keeps it and the test collapses; within-trace dedup
        # keeps only the first (null) occurrence.
        from tokenseal import prf as _prf
        key = 31337
        rng = np.random.default_rng(0)
        pairs = []
        for _ in range(120):
            ctx = tuple(int(x) for x in rng.integers(0, 4096, 3))
            cands = np.arange(64)
            copied = int(cands[np.argmax(_prf.prf_vector(cands, ctx, key))])
            first_pred = int(rng.integers(0, 4096))
            pairs.append((ctx, first_pred))   # first occurrence: no copy source
            pairs.append((ctx, copied))       # second occurrence: copied
        stream = make_stream(pairs)
        sound = radioactivity_pvalue([stream], (key,), weighting="uniform",
                                     dedup_within_trace=True)
        unsound = radioactivity_pvalue([stream], (key,), weighting="uniform",
                                       dedup_within_trace=False)
        assert sound.log10_p > -3        # calibrated: no collapse
        assert unsound.log10_p < -20     # collapse without within-trace dedup

    def test_empty_after_dedup_rejected(self):
        with pytest.raises(ValueError):
            radioactivity_pvalue([], (1,))
