import type { AnswerRequest } from "./schemas.js";

// Prompt assembly is fixed and versioned so runs stay comparable across
// server updates: retrieved chunks first (chronological, each frame tagged
// with a [t=MM:SS] marker), then the recent window, then the question and a
// lettered option list.

export const PROMPT_VERSION = "v1";

const LETTERS = "ABCDEFGH";

export function timestampMarker(seconds: number): string {
  const total = Math.max(0, Math.floor(seconds));
  const mm = String(Math.floor(total / 60)).padStart(2, "0");
  const ss = String(total % 60).padStart(2, "0");
  return `[t=${mm}:${ss}]`;
}

export function assemblePrompt(request: AnswerRequest): string {
  const parts: string[] = [];
  for (const chunk of request.retrieved) {
    parts.push(`(retrieved ${timestampMarker(chunk.span[0])}-${timestampMarker(chunk.span[1])})`);
    for (const frame of chunk.frames) parts.push(`${timestampMarker(frame.t)} <frame>`);
  }
  for (const frame of request.frames) parts.push(`${timestampMarker(frame.t)} <frame>`);
  parts.push(`Question: ${request.question}`);
  if (request.options.length > 0) {
    request.options.forEach((option, i) => parts.push(`${LETTERS[i]}. ${option}`));
    parts.push("Answer with the option letter.");
  }
  return parts.join("\n");
}

/** Parse the model's option letter; fall back to option 0 when options exist. */
export function chooseOption(answerText: string, nOptions: number): number | null {
  if (nOptions <= 0) return null;
  const match = /^\s*\(?([A-H])\)?[.):\s]/.exec(answerText) ?? /^\s*\(?([A-H])\)?$/.exec(answerText.trim());
  if (match) {
    const index = match[1].charCodeAt(0) - 65;
    if (index < nOptions) return index;
  }
  return 0;
}
