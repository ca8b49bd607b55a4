export interface ServerConfig {
  /** Answer model identifier; "echo" ships for GPU-free testing. */
  model: string;
  /** Embedding provider identifier; "hash" ships for GPU-free testing. */
  embedder: string;
  /** "cpu" for the deterministic test providers; real providers may use others. */
  device: string;
  port: number;
  /** Hard cap on total frames per request (recent + retrieved). */
  maxFrames: number;
  /** Largest harness context the server must admit: N + k * chunkLen. */
  nRecent: number;
  kRetrieved: number;
  chunkLen: number;
  embedDim: number;
  embedSeed: number;
  /** Fixed artificial generation delay; lets the echo mode exercise TTFT paths. */
  answerDelayMs: number;
}

export const defaults: ServerConfig = {
  model: "echo",
  embedder: "hash",
  device: "cpu",
  port: 8008,
  maxFrames: 256,
  nRecent: 4,
  kRetrieved: 5,
  chunkLen: 8,
  embedDim: 64,
  embedSeed: 0,
  answerDelayMs: 0,
};

export function validateConfig(config: ServerConfig): ServerConfig {
  const budget = config.nRecent + config.kRetrieved * config.chunkLen;
  if (config.maxFrames < budget) {
    throw new Error(
      `maxFrames=${config.maxFrames} is below the configured context budget ` +
        `N + k*chunkLen = ${budget}`,
    );
  }
  if (config.embedDim < 1) throw new Error("embedDim must be >= 1");
  if (config.answerDelayMs < 0) throw new Error("answerDelayMs must be >= 0");
  return config;
}
