import { defaults } from "./config.js";
import { createServer } from "./server.js";

function numberArg(flag: string, fallback: number): number {
  const index = process.argv.indexOf(flag);
  if (index < 0 || index + 1 >= process.argv.length) return fallback;
  const value = Number(process.argv[index + 1]);
  if (!Number.isFinite(value)) throw new Error(`${flag} expects a number`);
  return value;
}

function stringArg(flag: string, fallback: string): string {
  const index = process.argv.indexOf(flag);
  return index >= 0 && index + 1 < process.argv.length ? process.argv[index + 1] : fallback;
}

const port = numberArg("--port", Number(process.env.PORT ?? defaults.port));
const app = createServer({
  model: stringArg("--model", process.env.MODEL ?? defaults.model),
  embedDim: numberArg("--embed-dim", defaults.embedDim),
  maxFrames: numberArg("--max-frames", defaults.maxFrames),
  answerDelayMs: numberArg("--answer-delay-ms", defaults.answerDelayMs),
  port,
});

app.listen(port, "127.0.0.1", () => {
  console.log(`model server listening on http://127.0.0.1:${port}`);
});
