import { execFileSync, spawnSync } from "child_process";
import { existsSync } from "fs";
import { join } from "path";
import { beforeAll, describe, expect, it } from "vitest";

import { FIXTURES, INVALID_SOURCE } from "./fixtures";

const CLI = join(__dirname, "..", "dist", "cli.js");

function runCli(source: string) {
  return spawnSync("node", [CLI], { input: source, encoding: "utf-8" });
}

describe("cli protocol", () => {
  beforeAll(() => {
    if (!existsSync(CLI)) {
      execFileSync("npx", ["tsc", "-p", join(__dirname, "..", "tsconfig.json")]);
    }
  });

  it("emits exactly one record line on stdout and nothing else", () => {
    const result = runCli(FIXTURES[3].source);
    expect(result.status).toBe(0);
    const lines = result.stdout.split("\n").filter((l) => l.length > 0);
    expect(lines.length).toBe(1);
    const record = JSON.parse(lines[0]);
    expect(record.function_count).toBe(FIXTURES[3].functionCount);
  });

  it("exits 0 even for unparseable source", () => {
    const result = runCli(INVALID_SOURCE);
    expect(result.status).toBe(0);
    expect(JSON.parse(result.stdout.trim())).toEqual({
      protocol_version: 1,
      parse_ok: false,
    });
  });

  it("handles empty stdin", () => {
    const result = runCli("");
    expect(result.status).toBe(0);
    expect(JSON.parse(result.stdout.trim()).max_depth).toBe(1);
  });

  it("is deterministic across repeated invocations", () => {
    const outputs = new Set<string>();
    for (let i = 0; i < 5; i++) {
      outputs.add(runCli(FIXTURES[4].source).stdout);
    }
    expect(outputs.size).toBe(1);
  });
});
