/**
 * TypeScript bindings for the tokenseal watermarking toolkit.
 *
 * Wraps the `tokenseal bridge` line-JSON protocol (one JSON request per
 * line on stdin, one response per line on stdout) in a typed client:
 *
 *   - wmProcess: logits-processor hook (logits + history tail -> token)
 *   - openSession/step: stateful generation with repeated-context masking
 *   - wmDetect / wmLocalize: detection entry points on token-id arrays
 *
 * All computation happens in the core process; validation errors surface
 * as native exceptions carrying the core's error text.
 */

import { spawn, ChildProcessWithoutNullStreams } from "node:child_process";
import { once } from "node:events";
import * as readline from "node:readline";

export interface SamplerConfig {
  strategy:
    | "none"
    | "single_key"
    | "dual_key"
    | "mixing"
    | "periodic_skip"
    | "entropy_skip"
    | "adaptive_skip"
    | "synthid";
  keys: number[];
  alpha?: number;
  a?: number;
  tau?: number;
  k?: number;
  temperature?: number;
  topP?: number;
  repeatedContextMasking?: boolean;
  rngSeed?: number;
  depth?: number;
}

export interface DetectorConfig {
  keys: number[];
  k?: number;
  alpha?: number;
  weighting?: "uniform" | "entropy";
  method?: "textseal" | "synthid";
  depth?: number;
  /** localization only */
  LMin?: number;
  YMax?: number;
}

export interface DetectVerdict {
  log10P: number;
  statistic: number;
  nValid: number;
  method: string;
}

export interface RegionVerdict {
  start: number;
  end: number;
  log10P: number;
}

export interface LocalizeVerdict {
  log10P: number;
  pathChosen: string;
  regions: RegionVerdict[];
  nValid: number;
}

export interface ConstantsInfo {
  version: string;
  kMax: number;
}

type RawResponse = { ok: boolean; error?: string } & Record<string, unknown>;

function samplerToWire(config: SamplerConfig): Record<string, unknown> {
  const out: Record<string, unknown> = {
    strategy: config.strategy,
    keys: config.keys,
  };
  if (config.alpha !== undefined) out.alpha = config.alpha;
  if (config.a !== undefined) out.a = config.a;
  if (config.tau !== undefined) out.tau = config.tau;
  if (config.k !== undefined) out.k = config.k;
  if (config.temperature !== undefined) out.temperature = config.temperature;
  if (config.topP !== undefined) out.top_p = config.topP;
  if (config.repeatedContextMasking !== undefined)
    out.repeated_context_masking = config.repeatedContextMasking;
  if (config.rngSeed !== undefined) out.rng_seed = config.rngSeed;
  if (config.depth !== undefined) out.depth = config.depth;
  return out;
}

function detectorToWire(config: DetectorConfig): Record<string, unknown> {
  const out: Record<string, unknown> = { keys: config.keys };
  if (config.k !== undefined) out.k = config.k;
  if (config.alpha !== undefined) out.alpha = config.alpha;
  if (config.weighting !== undefined) out.weighting = config.weighting;
  if (config.method !== undefined) out.method = config.method;
  if (config.depth !== undefined) out.depth = config.depth;
  if (config.LMin !== undefined) out.L_min = config.LMin;
  if (config.YMax !== undefined) out.Y_max = config.YMax;
  return out;
}

/** Stateful generation handle owning a core-side GenState. */
export class Session {
  constructor(
    private readonly bridge: TokensealBridge,
    private readonly id: number,
  ) {}

  async step(logits: ArrayLike<number>): Promise<number> {
    const res = await this.bridge.request({
      op: "step",
      session: this.id,
      logits: Array.from(logits),
    });
    return res.token as number;
  }

  async close(): Promise<void> {
    await this.bridge.request({ op: "close_session", session: this.id });
  }
}

export interface BridgeOptions {
  /** Command to launch the core; defaults to TOKENSEAL_CMD or `tokenseal bridge`. */
  command?: string[];
}

export class TokensealBridge {
  private proc: ChildProcessWithoutNullStreams;
  private pending: Array<{
    resolve: (r: RawResponse) => void;
    reject: (e: Error) => void;
  }> = [];
  private closed = false;

  private constructor(proc: ChildProcessWithoutNullStreams) {
    this.proc = proc;
    const rl = readline.createInterface({ input: proc.stdout });
    rl.on("line", (line) => {
      const waiter = this.pending.shift();
      if (!waiter) return;
      try {
        waiter.resolve(JSON.parse(line) as RawResponse);
      } catch (err) {
        waiter.reject(err as Error);
      }
    });
    proc.on("exit", () => {
      this.closed = true;
      for (const waiter of this.pending.splice(0)) {
        waiter.reject(new Error("tokenseal bridge exited"));
      }
    });
  }

  static async spawn(options: BridgeOptions = {}): Promise<TokensealBridge> {
    const cmd =
      options.command ??
      (process.env.TOKENSEAL_CMD
        ? process.env.TOKENSEAL_CMD.split(" ")
        : ["tokenseal", "bridge"]);
    const proc = spawn(cmd[0], cmd.slice(1), { stdio: "pipe" });
    await once(proc, "spawn");
    return new TokensealBridge(proc);
  }

  /** Low-level request; resolves with the raw response or throws the
   * core's error text. */
  async request(payload: Record<string, unknown>): Promise<RawResponse> {
    if (this.closed) throw new Error("bridge is closed");
    const promise = new Promise<RawResponse>((resolve, reject) => {
      this.pending.push({ resolve, reject });
    });
    this.proc.stdin.write(JSON.stringify(payload) + "\n");
    const res = await promise;
    if (!res.ok) throw new Error(res.error ?? "tokenseal bridge error");
    return res;
  }

  async constants(): Promise<ConstantsInfo> {
    const res = await this.request({ op: "constants" });
    return { version: res.version as string, kMax: res.k_max as number };
  }

  /** Stateless logits-processor hook: one watermarked token. */
  async wmProcess(
    logits: ArrayLike<number>,
    history: ArrayLike<number>,
    config: SamplerConfig,
  ): Promise<number> {
    const res = await this.request({
      op: "process",
      logits: Array.from(logits),
      history: Array.from(history),
      config: samplerToWire(config),
    });
    return res.token as number;
  }

  async openSession(
    config: SamplerConfig,
    history: ArrayLike<number> = [],
  ): Promise<Session> {
    const res = await this.request({
      op: "open_session",
      config: samplerToWire(config),
      history: Array.from(history),
    });
    return new Session(this, res.session as number);
  }

  async wmDetect(
    tokens: ArrayLike<number>,
    config: DetectorConfig,
  ): Promise<DetectVerdict> {
    const res = await this.request({
      op: "detect",
      tokens: Array.from(tokens),
      config: detectorToWire(config),
    });
    return {
      log10P: res.log10_p as number,
      statistic: res.statistic as number,
      nValid: res.n_valid as number,
      method: res.method as string,
    };
  }

  async wmLocalize(
    tokens: ArrayLike<number>,
    config: DetectorConfig,
  ): Promise<LocalizeVerdict> {
    const res = await this.request({
      op: "localize",
      tokens: Array.from(tokens),
      config: detectorToWire(config),
    });
    const regions = (res.regions as Array<Record<string, number>>).map((r) => ({
      start: r.start,
      end: r.end,
      log10P: r.log10_p,
    }));
    return {
      log10P: res.log10_p as number,
      pathChosen: res.path_chosen as string,
      regions,
      nValid: res.n_valid as number,
    };
  }

  close(): void {
    this.closed = true;
    this.proc.stdin.end();
    this.proc.kill();
  }
}
