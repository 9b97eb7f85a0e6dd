#!/usr/bin/env node
/**
 * astprobe: full source on stdin, exactly one JSON record line on stdout.
 *
 * Unparseable source is a normal outcome ({"parse_ok": false}, exit 0);
 * a nonzero exit means the probe itself broke and the caller should flag
 * the sample as missing metrics.
 */
import { computeMetrics, serializeRecord } from "./metrics";

async function readStdin(): Promise<string> {
  const chunks: Buffer[] = [];
  for await (const chunk of process.stdin) {
    chunks.push(chunk as Buffer);
  }
  return Buffer.concat(chunks).toString("utf-8");
}

async function main(): Promise<void> {
  const source = await readStdin();
  process.stdout.write(serializeRecord(computeMetrics(source)) + "\n");
}

main().catch((error) => {
  process.stderr.write(`astprobe: ${String(error)}\n`);
  process.exit(1);
});
