import { z } from "zod";

// Wire protocol (JSON over HTTP, UTF-8). These shapes are shared with the
// evaluation harness; field names are part of the contract.

export const frameItem = z.object({
  t: z.number(),
  mode: z.enum(["b64", "ref"]),
  data: z.string(),
});

export const retrievedItem = z.object({
  span: z.tuple([z.number(), z.number()]),
  frames: z.array(frameItem),
});

export const genParams = z.object({
  max_new_tokens: z.number().int().positive().default(64),
});

export const answerRequest = z.object({
  query_id: z.string(),
  question: z.string(),
  options: z.array(z.string()).default([]),
  frames: z.array(frameItem).default([]),
  retrieved: z.array(retrievedItem).default([]),
  gen: genParams.default({ max_new_tokens: 64 }),
});

export const answerResponse = z.object({
  query_id: z.string(),
  answer_text: z.string(),
  chosen_option: z.number().int().nullable(),
  ttft_ms: z.number().nullable(),
  token_count: z.number().int().nullable(),
});

export const embedItem = z.object({
  mode: z.enum(["b64", "ref", "text"]),
  data: z.string(),
});

export const embedRequest = z.object({
  items: z.array(embedItem),
});

export const embedResponse = z.object({
  dim: z.number().int().positive(),
  normalized: z.literal(true),
  embeddings: z.array(z.array(z.number())),
});

export const healthResponse = z.object({
  status: z.string(),
  model: z.string(),
  embedder: z.string(),
  prompt_version: z.string(),
});

export type FrameItem = z.infer<typeof frameItem>;
export type RetrievedItem = z.infer<typeof retrievedItem>;
export type AnswerRequest = z.infer<typeof answerRequest>;
export type AnswerResponse = z.infer<typeof answerResponse>;
export type EmbedRequest = z.infer<typeof embedRequest>;
export type EmbedResponse = z.infer<typeof embedResponse>;
