/**
 * Thin client for the geoscout batch reward service.
 *
 * The client is a transport layer only: reward numbers from the server are
 * surfaced untouched (JSON.parse gives the exact doubles the server wrote),
 * large lists are chunked to the server's batch limit, and transient
 * failures are retried with exponential backoff. There is no local reward
 * computation fallback.
 */

export type TaskKind = "scale" | "topo" | "anom";
export type Mode = "direct" | "reasoning";

export interface ScaleGroundTruth {
  levels: number[];
  boxes: number[][];
}

export interface TopoGroundTruth {
  order: number[];
}

export interface AnomGroundTruth {
  index: number;
  grid: [number, number];
}

export type GroundTruth = ScaleGroundTruth | TopoGroundTruth | AnomGroundTruth;

export interface RewardItem {
  task: TaskKind;
  mode: Mode;
  output: string;
  ground_truth: GroundTruth;
}

export interface RewardBreakdown {
  r_acc: number;
  r_fmt: number;
  r_reason: number;
  r_total: number;
  parse_ok: boolean;
  sub: Record<string, number>;
}

export interface RewardConfigOverrides {
  tau?: number;
  scale_mix?: number;
}

export interface HealthStatus {
  status: string;
  version: string;
}

export interface ClientConfig {
  /** Service base URL; falls back to the GEOSCOUT_URL environment variable. */
  baseUrl?: string;
  /** Per-request timeout in seconds. */
  timeoutSeconds?: number;
  /** Retries after the initial attempt, on network errors and 5xx/429. */
  maxRetries?: number;
  /** Items per request; must mirror the server's --max-batch. */
  batchLimit?: number;
}

/** Server unreachable, or still failing after the configured retries. */
export class ConnectionError extends Error {
  constructor(message: string, readonly cause?: unknown) {
    super(message);
    this.name = "ConnectionError";
  }
}

/** Server answered, but not with the payload shape this client speaks. */
export class SchemaError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SchemaError";
  }
}

const DEFAULTS = {
  timeoutSeconds: 30,
  maxRetries: 2,
  batchLimit: 1024,
};

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

function isRewardBreakdown(value: unknown): value is RewardBreakdown {
  if (typeof value !== "object" || value === null) return false;
  const v = value as Record<string, unknown>;
  return (
    typeof v.r_acc === "number" &&
    typeof v.r_fmt === "number" &&
    typeof v.r_reason === "number" &&
    typeof v.r_total === "number" &&
    typeof v.parse_ok === "boolean"
  );
}

export class RewardClient {
  readonly baseUrl: string;
  readonly timeoutSeconds: number;
  readonly maxRetries: number;
  readonly batchLimit: number;

  constructor(config: ClientConfig = {}) {
    const base = config.baseUrl ?? process.env.GEOSCOUT_URL;
    if (!base) {
      throw new Error("no base URL: pass baseUrl or set GEOSCOUT_URL");
    }
    this.baseUrl = base.replace(/\/+$/, "");
    this.timeoutSeconds = config.timeoutSeconds ?? DEFAULTS.timeoutSeconds;
    this.maxRetries = config.maxRetries ?? DEFAULTS.maxRetries;
    this.batchLimit = config.batchLimit ?? DEFAULTS.batchLimit;
    if (this.timeoutSeconds <= 0) throw new Error("timeoutSeconds must be > 0");
    if (this.maxRetries < 0) throw new Error("maxRetries must be >= 0");
    if (this.batchLimit < 1) throw new Error("batchLimit must be >= 1");
  }

  /**
   * Score a list of items of any length.
   *
   * Lists longer than the batch limit are split into consecutive chunks and
   * the per-chunk results concatenated, so the output index i always
   * corresponds to items[i].
   */
  async scoreBatch(
    items: RewardItem[],
    config?: RewardConfigOverrides,
  ): Promise<RewardBreakdown[]> {
    const results: RewardBreakdown[] = [];
    for (let lo = 0; lo < items.length; lo += this.batchLimit) {
      const chunk = items.slice(lo, lo + this.batchLimit);
      const body: Record<string, unknown> = { items: chunk };
      if (config !== undefined) body.config = config;
      const payload = await this.request("/v1/reward", {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
      const rewards = (payload as { rewards?: unknown }).rewards;
      if (!Array.isArray(rewards) || rewards.length !== chunk.length) {
        throw new SchemaError(
          `expected ${chunk.length} rewards, got ${Array.isArray(rewards) ? rewards.length : typeof rewards}`,
        );
      }
      for (const reward of rewards) {
        if (!isRewardBreakdown(reward)) {
          throw new SchemaError("reward entry missing required numeric fields");
        }
        results.push(reward);
      }
    }
    return results;
  }

  async health(): Promise<HealthStatus> {
    const payload = await this.request("/v1/health", { method: "GET" });
    const { status, version } = payload as Partial<HealthStatus>;
    if (typeof status !== "string" || typeof version !== "string") {
      throw new SchemaError("health payload missing status/version");
    }
    return { status, version };
  }

  private async request(path: string, init: RequestInit): Promise<unknown> {
    const url = this.baseUrl + path;
    let lastError: unknown;
    for (let attempt = 0; attempt <= this.maxRetries; attempt++) {
      if (attempt > 0) await sleep(100 * 2 ** (attempt - 1));
      let response: Response;
      try {
        response = await fetch(url, {
          ...init,
          signal: AbortSignal.timeout(this.timeoutSeconds * 1000),
        });
      } catch (err) {
        lastError = err;
        continue; // network error or timeout: retry
      }
      if (response.status >= 500 || response.status === 429) {
        lastError = new Error(`server returned ${response.status}`);
        continue;
      }
      if (!response.ok) {
        const text = await response.text();
        throw new SchemaError(`request rejected with ${response.status}: ${text}`);
      }
      try {
        return await response.json();
      } catch (err) {
        throw new SchemaError(`response is not JSON: ${String(err)}`);
      }
    }
    throw new ConnectionError(
      `${url} unreachable after ${this.maxRetries + 1} attempts`,
      lastError,
    );
  }
}
