"""Command-line interface.

Subcommands cover model training, watermarked generation, detection,
localization, the radioactivity test, and the experiment drivers.  Token
records travel as JSONL; experiment outputs are CSV with a schema
comment line.  The secret keys come from --key/--key2, a JSON config
file, or the TOKENSEAL_KEY / TOKENSEAL_KEY2 environment variables
(highest precedence).
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import bridge as bridge_mod
from .constants import CONSTANTS_VERSION
from .detect import DetectConfig, detect
from .generate import compile_model, generate_sequence, sample_prompts
from .harness import ExperimentSpec
from .harness.bench import run_bench
from .harness.dilution import run_dilution_experiment
from .harness.fpr import run_fpr_calibration
from .harness.pareto import run_pareto_sweep
from .harness.power import run_power_mc
from .harness.radio import run_radioactivity
from .harness.specsim import run_speculative_sim
from .localize import LocalizeConfig, annotate_boundaries, ensemble_detect
from .radioactive import PredictionStream, radioactivity_pvalue
from .sampling import SamplerConfig
from .detect import score_tokens
from .toylm import CompiledModel, ToyModel, build_synthetic_corpus, train_text

EXIT_DETECTED = 2


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as f:
        return json.load(f)


def _resolve_keys(cfg: dict, key: int | None, key2: int | None) -> tuple[int, ...]:
    keys = list(cfg.get("keys", []))
    if key is not None:
        keys = [key] + keys[1:]
    if key2 is not None:
        keys = (keys or [0])[:1] + [key2]
    if os.environ.get("TOKENSEAL_KEY"):
        keys = [int(os.environ["TOKENSEAL_KEY"])] + keys[1:]
    if os.environ.get("TOKENSEAL_KEY2"):
        keys = (keys or [0])[:1] + [int(os.environ["TOKENSEAL_KEY2"])]
    if not keys:
        raise click.UsageError("no secret key: use --key, a config file, or TOKENSEAL_KEY")
    return tuple(int(k) for k in keys)


def _read_jsonl(path: str):
    with click.open_file(path) as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def _write_jsonl(path: str, records):
    with click.open_file(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")


@click.group()
def main():
    """Distortion-free dual-key watermarking toolkit."""


@main.command("train-toylm")
@click.option("--corpus", type=click.Path(exists=True), default=None,
              help="Text file; defaults to the bundled synthetic corpus.")
@click.option("--order", default=4, show_default=True)
@click.option("--vocab-size", default=2048, show_default=True)
@click.option("--smoothing", default=3e-5, show_default=True)
@click.option("--corpus-chars", default=1_200_000, show_default=True)
@click.option("--corpus-seed", default=20_240_101, show_default=True)
@click.option("--out", required=True, type=click.Path())
def train_toylm(corpus, order, vocab_size, smoothing, corpus_chars, corpus_seed, out):
    """Train the toy language model and save it as JSON."""
    if corpus:
        with open(corpus) as f:
            text = f.read()
    else:
        text = build_synthetic_corpus(corpus_chars, seed=corpus_seed)
    model = train_text(text, order=order, vocab_size=vocab_size, smoothing=smoothing)
    model.save(out)
    click.echo(f"trained order-{order} model: vocab={model.vocab_size} "
               f"contexts={len(model.counts)} -> {out}")


def _sampler_config(cfg: dict, keys, strategy, alpha, a, tau, k, temperature, top_p,
                    masking, seed, depth) -> SamplerConfig:
    base = dict(cfg.get("sampler", {}))
    base.update({k_: v for k_, v in dict(
        strategy=strategy, alpha=alpha, a=a, tau=tau, k=k, temperature=temperature,
        top_p=top_p, repeated_context_masking=masking, rng_seed=seed, depth=depth,
    ).items() if v is not None})
    base["keys"] = keys
    return SamplerConfig(**base)


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--key", type=int, default=None)
@click.option("--key2", type=int, default=None)
@click.option("--strategy", default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--a", "a_", type=float, default=None)
@click.option("--tau", type=float, default=None)
@click.option("--k", type=int, default=None)
@click.option("--temperature", type=float, default=None)
@click.option("--top-p", type=float, default=None)
@click.option("--masking/--no-masking", default=None)
@click.option("--depth", type=int, default=None)
@click.option("--n", "n_prompts", default=10, show_default=True)
@click.option("--len", "gen_len", default=400, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default="-")
def generate(model_path, config_path, key, key2, strategy, alpha, a_, tau, k,
             temperature, top_p, masking, depth, n_prompts, gen_len, seed, out):
    """Generate watermarked token sequences as JSONL records."""
    cfg = _load_config(config_path)
    keys = _resolve_keys(cfg.get("sampler", {}), key, key2)
    sampler = _sampler_config(cfg, keys, strategy, alpha, a_, tau, k, temperature,
                              top_p, masking, seed, depth)
    model = ToyModel.load(model_path)
    comp = compile_model(model, sampler)
    rng = np.random.default_rng(seed)
    prompts = sample_prompts(model, n_prompts, max(sampler.k, model.order), rng)
    records = []
    for i, prompt in enumerate(prompts):
        toks = generate_sequence(comp, prompt, gen_len, sampler.with_seed(seed + i))
        records.append({"prompt_id": i, "tokens": [int(t) for t in toks],
                        "strategy": sampler.strategy, "seed": seed + i})
    _write_jsonl(out, records)


def _detect_config(cfg: dict, keys, k, alpha, weighting, method, depth, threshold):
    base = dict(cfg.get("detector", {}))
    base.pop("proxy_model", None)
    base.update({k_: v for k_, v in dict(
        k=k, alpha=alpha, weighting=weighting, method=method, depth=depth,
        threshold_log10p=threshold).items() if v is not None})
    base["keys"] = keys
    return DetectConfig(**base)


@main.command("detect")
@click.option("--in", "in_path", default="-")
@click.option("--out", default="-")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--key", type=int, default=None)
@click.option("--key2", type=int, default=None)
@click.option("--k", type=int, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--weighting", type=click.Choice(["uniform", "entropy"]), default=None)
@click.option("--method", type=click.Choice(["textseal", "synthid"]), default=None)
@click.option("--depth", type=int, default=None)
@click.option("--proxy-model", type=click.Path(exists=True), default=None)
@click.option("--threshold", type=float, default=None,
              help="log10 p at or below which a record counts as detected.")
def detect_cmd(in_path, out, config_path, key, key2, k, alpha, weighting, method,
               depth, proxy_model, threshold):
    """Detect the watermark in JSONL token records; exit 2 if any record
    is detected at the threshold."""
    cfg = _load_config(config_path)
    keys = _resolve_keys(cfg.get("detector", {}), key, key2)
    dconf = _detect_config(cfg, keys, k, alpha, weighting, method, depth, threshold)
    proxy = None
    proxy_path = proxy_model or cfg.get("detector", {}).get("proxy_model")
    if dconf.weighting == "entropy" and proxy_path:
        proxy = CompiledModel(ToyModel.load(proxy_path), temperature=1.0)
    any_detected = False
    records = []
    for rec in _read_jsonl(in_path):
        v = detect(np.asarray(rec["tokens"], dtype=np.int64), dconf, proxy=proxy)
        detected = v.log10_p <= dconf.threshold_log10p
        any_detected |= detected
        records.append({"id": rec.get("prompt_id", rec.get("id")), "method": v.method,
                        "n_valid": v.n_valid, "statistic": v.statistic,
                        "log10_p": v.log10_p, "detected": bool(detected)})
    _write_jsonl(out, records)
    if any_detected:
        sys.exit(EXIT_DETECTED)


def _rle(mask) -> list[list[int]]:
    runs = []
    start = None
    for i, v in enumerate(mask):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append([start, i])
            start = None
    if start is not None:
        runs.append([start, len(mask)])
    return runs


@main.command("localize")
@click.option("--in", "in_path", default="-")
@click.option("--out", default="-")
@click.option("--key", type=int, default=None)
@click.option("--key2", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--k", type=int, default=3, show_default=True)
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--l-min", default=50, show_default=True)
@click.option("--y-max", default=5, show_default=True)
@click.option("--annotate/--no-annotate", default=False)
@click.option("--threshold", type=float, default=-2.0, show_default=True)
def localize_cmd(in_path, out, key, key2, config_path, k, alpha, l_min, y_max,
                 annotate, threshold):
    """Locate watermarked regions inside JSONL token records."""
    cfg = _load_config(config_path)
    keys = _resolve_keys(cfg.get("detector", {}), key, key2)
    lconf = LocalizeConfig(L_min=l_min, Y_max=y_max)
    records = []
    for rec in _read_jsonl(in_path):
        toks = np.asarray(rec["tokens"], dtype=np.int64)
        series = score_tokens(toks, keys, k, alpha if len(keys) > 1 else 0.0)
        verdict = ensemble_detect(series, lconf)
        entry = {
            "id": rec.get("prompt_id", rec.get("id")),
            "regions": [{"start": r.start, "end": r.end, "log10_p": r.log10_p_raw}
                        for r in verdict.regions],
            "log10_p_final": verdict.log10_p_final,
            "path_chosen": verdict.path_chosen,
        }
        if annotate and verdict.log10_p_final <= threshold:
            entry["annotation_mask_rle"] = _rle(annotate_boundaries(series, lconf))
        records.append(entry)
    _write_jsonl(out, records)


@main.command("radioactivity")
@click.option("--in", "in_path", default="-")
@click.option("--out", default="-")
@click.option("--key", type=int, default=None)
@click.option("--key2", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--k", type=int, default=3, show_default=True)
@click.option("--alpha", type=float, default=0.1, show_default=True)
@click.option("--weighting", default="sqrt_norm", show_default=True)
def radioactivity_cmd(in_path, out, key, key2, config_path, k, alpha, weighting):
    """Aggregate teacher-forced prediction records into one verdict.

    Records: {"tokens": trace, "predictions": student top-1 from position
    k on, "entropies": matching student entropies}.
    """
    cfg = _load_config(config_path)
    keys = _resolve_keys(cfg.get("detector", {}), key, key2)
    streams = []
    for rec in _read_jsonl(in_path):
        trace = [int(t) for t in rec["tokens"]]
        preds = [int(t) for t in rec["predictions"]]
        ents = [float(h) for h in rec["entropies"]]
        contexts = [tuple(trace[i: i + k]) for i in range(len(preds))]
        streams.append(PredictionStream(contexts=contexts, predictions=preds,
                                        entropies=ents))
    v = radioactivity_pvalue(streams, keys, alpha=alpha if len(keys) > 1 else 0.0,
                             weighting=weighting)
    _write_jsonl(out, [{"method": v.method, "n_valid": v.n_valid,
                        "statistic": v.statistic, "log10_p": v.log10_p}])


def _spec_options(fn):
    fn = click.option("--trials", default=200, show_default=True)(fn)
    fn = click.option("--len", "gen_len", default=400, show_default=True)(fn)
    fn = click.option("--seed", default=0, show_default=True)(fn)
    fn = click.option("--workers", default=1, show_default=True)(fn)
    fn = click.option("--out", required=True, type=click.Path())(fn)
    return fn


@main.command("calibrate-fpr")
@_spec_options
@click.option("--doc-len", default=256, show_default=True)
@click.option("--null-strategy", default="none", show_default=True)
def calibrate_fpr_cmd(trials, gen_len, seed, workers, out, doc_len, null_strategy):
    """Empirical FPR vs nominal threshold on null text."""
    spec = ExperimentSpec(tag="fpr", trials=trials, gen_len=gen_len, seed=seed,
                          workers=workers, output=out,
                          grid={"doc_len": doc_len, "null_strategy": null_strategy})
    run_fpr_calibration(spec)
    click.echo(f"wrote {out}")


@main.command("pareto")
@_spec_options
def pareto_cmd(trials, gen_len, seed, workers, out):
    """Diversity-detectability sweep."""
    spec = ExperimentSpec(tag="pareto", trials=trials, gen_len=gen_len, seed=seed,
                          workers=workers, output=out)
    run_pareto_sweep(spec)
    click.echo(f"wrote {out}")


@main.command("dilution")
@_spec_options
def dilution_cmd(trials, gen_len, seed, workers, out):
    """Dilution / fragmentation localization experiment."""
    spec = ExperimentSpec(tag="dilution", trials=trials, gen_len=gen_len, seed=seed,
                          workers=workers, output=out)
    run_dilution_experiment(spec)
    click.echo(f"wrote {out}")


@main.command("power-mc")
@_spec_options
def power_mc_cmd(trials, gen_len, seed, workers, out):
    """Monte Carlo Z-ratio estimates for the fusion detectors."""
    spec = ExperimentSpec(tag="power", trials=trials, gen_len=gen_len, seed=seed,
                          workers=workers, output=out)
    for row in run_power_mc(spec):
        click.echo(json.dumps(row))


@main.command("spec-sim")
@_spec_options
def spec_sim_cmd(trials, gen_len, seed, workers, out):
    """Speculative decoding simulation."""
    spec = ExperimentSpec(tag="specsim", trials=trials, gen_len=gen_len, seed=seed,
                          workers=workers, output=out)
    click.echo(json.dumps(run_speculative_sim(spec)))


@main.command("radio-sim")
@_spec_options
def radio_sim_cmd(trials, gen_len, seed, workers, out):
    """Radioactivity sweep on the simulated student."""
    spec = ExperimentSpec(tag="radio", trials=trials, gen_len=gen_len, seed=seed,
                          workers=workers, output=out)
    for row in run_radioactivity(spec):
        click.echo(json.dumps(row))


@main.command("bench")
@click.option("--out", default=None)
def bench_cmd(out):
    """Microbenchmark the samplers."""
    spec = ExperimentSpec(tag="bench", trials=1, output=out)
    for row in run_bench(spec):
        click.echo(json.dumps(row))


@main.command("wm-batch")
@click.option("--in", "in_path", default="-")
@click.option("--out", default="-")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
def wm_batch_cmd(in_path, out, config_path):
    """Batch logits-processor: one token per {"id", "logits", "history"} record."""
    cfg = _load_config(config_path)
    sampler = bridge_mod.sampler_from_dict(cfg.get("sampler", cfg))
    records = []
    for rec in _read_jsonl(in_path):
        token = bridge_mod.process_logits(rec["logits"], rec.get("history", []), sampler)
        records.append({"id": rec.get("id"), "token": int(token)})
    _write_jsonl(out, records)


@main.command("bridge")
def bridge_cmd():
    """Line-oriented JSON bridge over stdin/stdout for foreign runtimes."""
    bridge_mod.serve(sys.stdin, sys.stdout)


@main.command("vectors")
def vectors_cmd():
    """Print the frozen constants version and golden vectors."""
    from .prf import golden_rows
    click.echo(json.dumps({
        "version": CONSTANTS_VERSION,
        "rows": [{"token": t, "window": list(w), "key": k, "hash": h}
                 for t, w, k, h in golden_rows()],
    }))


if __name__ == "__main__":
    main()
