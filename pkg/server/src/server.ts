import express, { type Express } from "express";
import { ZodError } from "zod";

import { type ServerConfig, defaults, validateConfig } from "./config.js";
import { ItemError, embedItem } from "./embedder.js";
import { PROMPT_VERSION, assemblePrompt, chooseOption } from "./prompt.js";
import { answerRequest, embedRequest } from "./schemas.js";

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

function fieldPath(error: ZodError): string {
  const issue = error.issues[0];
  const path = issue?.path?.join(".") || "(root)";
  return `${path}: ${issue?.message ?? "invalid"}`;
}

/**
 * Reference implementation of the wire protocol. The shipped "echo" model
 * answers with the question verbatim after the configured delay, so protocol
 * and end-to-end tests run without a GPU; the prompt assembled for a real
 * model is still built (and versioned) on every request. No state is kept
 * across requests besides the loaded configuration.
 */
export function createServer(partial: Partial<ServerConfig> = {}): Express {
  const config = validateConfig({ ...defaults, ...partial });
  const app = express();
  app.use(express.json({ limit: "64mb" }));

  app.post("/v1/answer", async (req, res) => {
    const parsed = answerRequest.safeParse(req.body);
    if (!parsed.success) {
      res.status(422).json({ error: "schema", detail: fieldPath(parsed.error) });
      return;
    }
    const request = parsed.data;
    const totalFrames =
      request.frames.length + request.retrieved.reduce((acc, r) => acc + r.frames.length, 0);
    if (totalFrames > config.maxFrames) {
      res.status(413).json({
        error: "over-budget",
        detail: `request carries ${totalFrames} frames, limit is ${config.maxFrames}`,
      });
      return;
    }
    try {
      const prompt = assemblePrompt(request);
      const generationStart = process.hrtime.bigint();
      if (config.answerDelayMs > 0) await sleep(config.answerDelayMs);
      // echo model: the first "generated token" is the question itself
      const answerText = config.model === "echo" ? request.question : prompt;
      const ttftMs = Number(process.hrtime.bigint() - generationStart) / 1e6;
      res.json({
        query_id: request.query_id,
        answer_text: answerText,
        chosen_option: chooseOption(answerText, request.options.length),
        ttft_ms: ttftMs,
        token_count: answerText.split(/\s+/).filter(Boolean).length,
      });
    } catch (error) {
      res.status(500).json({ error: "model", detail: String(error) });
    }
  });

  app.post("/v1/embed", (req, res) => {
    const parsed = embedRequest.safeParse(req.body);
    if (!parsed.success) {
      res.status(422).json({ error: "schema", detail: fieldPath(parsed.error) });
      return;
    }
    try {
      const embeddings = parsed.data.items.map((item, i) =>
        embedItem(item, i, config.embedDim, config.embedSeed),
      );
      res.json({ dim: config.embedDim, normalized: true, embeddings });
    } catch (error) {
      if (error instanceof ItemError) {
        res.status(422).json({ error: "item", detail: error.message, item: error.index });
        return;
      }
      res.status(500).json({ error: "embedder", detail: String(error) });
    }
  });

  app.get("/v1/health", (_req, res) => {
    res.json({
      status: "ok",
      model: config.model,
      embedder: `${config.embedder}-d${config.embedDim}-s${config.embedSeed}`,
      prompt_version: PROMPT_VERSION,
    });
  });

  return app;
}
