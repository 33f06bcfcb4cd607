"""Line-oriented JSON bridge for foreign runtimes.

One JSON request per line on stdin, one JSON response per line on
stdout.  Ops:

  {"op": "constants"}                                    -> version info
  {"op": "process", "logits": [...], "history": [...],
   "config": {...}}                                      -> {"token": id}
  {"op": "open_session", "config": {...},
   "history": [...]}                                     -> {"session": id}
  {"op": "step", "session": id, "logits": [...]}         -> {"token": id}
  {"op": "close_session", "session": id}                 -> {"ok": true}
  {"op": "detect", "tokens": [...], "config": {...}}     -> verdict fields
  {"op": "localize", "tokens": [...], "config": {...}}   -> regions + final

Responses carry {"ok": true, ...} or {"ok": false, "error": msg}.
Stateless ops are pure; sessions own a GenState for repeated-context
masking and are not shareable across host threads.
"""

from __future__ import annotations

import json
from typing import TextIO

import numpy as np

from .constants import CONSTANTS_VERSION, K_MAX
from .detect import DetectConfig, detect, score_tokens
from .localize import LocalizeConfig, ensemble_detect
from .sampling import GenState, SamplerConfig, apply_decoding_filters, step


def sampler_from_dict(cfg: dict) -> SamplerConfig:
    cfg = dict(cfg)
    cfg["keys"] = tuple(int(k) for k in cfg.get("keys", (0,)))
    return SamplerConfig(**cfg)


def detector_from_dict(cfg: dict) -> DetectConfig:
    cfg = dict(cfg)
    cfg["keys"] = tuple(int(k) for k in cfg.get("keys", (0,)))
    cfg.pop("L_min", None)
    cfg.pop("Y_max", None)
    return DetectConfig(**cfg)


def process_logits(logits, history, config: SamplerConfig,
                   state: GenState | None = None) -> int:
    if state is None:
        state = GenState.fresh(config, [int(t) for t in history])
    pv = apply_decoding_filters(np.asarray(logits, dtype=np.float64),
                                config.temperature, config.top_p)
    return step(state, pv, config)


class Bridge:
    def __init__(self):
        self._sessions: dict[int, tuple[SamplerConfig, GenState]] = {}
        self._next_id = 1

    def handle(self, request: dict) -> dict:
        op = request.get("op")
        if op == "constants":
            return {"ok": True, "version": CONSTANTS_VERSION, "k_max": K_MAX}
        if op == "process":
            cfg = sampler_from_dict(request["config"])
            token = process_logits(request["logits"], request.get("history", []), cfg)
            return {"ok": True, "token": int(token)}
        if op == "open_session":
            cfg = sampler_from_dict(request["config"])
            state = GenState.fresh(cfg, [int(t) for t in request.get("history", [])])
            sid = self._next_id
            self._next_id += 1
            self._sessions[sid] = (cfg, state)
            return {"ok": True, "session": sid}
        if op == "step":
            cfg, state = self._sessions[request["session"]]
            token = process_logits(request["logits"], None, cfg, state=state)
            return {"ok": True, "token": int(token)}
        if op == "close_session":
            self._sessions.pop(request["session"], None)
            return {"ok": True}
        if op == "detect":
            cfg = detector_from_dict(request["config"])
            v = detect(np.asarray(request["tokens"], dtype=np.int64), cfg)
            return {"ok": True, "log10_p": v.log10_p, "statistic": v.statistic,
                    "n_valid": v.n_valid, "method": v.method}
        if op == "localize":
            cfg_d = request.get("config", {})
            keys = tuple(int(k) for k in cfg_d.get("keys", (0,)))
            k = int(cfg_d.get("k", 3))
            alpha = float(cfg_d.get("alpha", 0.5)) if len(keys) > 1 else 0.0
            lconf = LocalizeConfig(L_min=int(cfg_d.get("L_min", 50)),
                                   Y_max=int(cfg_d.get("Y_max", 5)))
            series = score_tokens(np.asarray(request["tokens"], dtype=np.int64),
                                  keys, k, alpha)
            verdict = ensemble_detect(series, lconf)
            return {"ok": True, "log10_p": verdict.log10_p_final,
                    "path_chosen": verdict.path_chosen,
                    "regions": [{"start": r.start, "end": r.end,
                                 "log10_p": r.log10_p_raw} for r in verdict.regions],
                    "n_valid": series.n_valid}
        return {"ok": False, "error": f"unknown op {op!r}"}


def serve(stdin: TextIO, stdout: TextIO) -> None:
    bridge = Bridge()
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            response = bridge.handle(json.loads(line))
        except Exception as exc:  # surface core error text to the host
            response = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()
