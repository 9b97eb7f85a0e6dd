import { readFileSync } from "fs";
import { join } from "path";
import { describe, expect, it } from "vitest";

import { computeMetrics, serializeRecord, PROTOCOL_VERSION } from "../src/metrics";
import { FIXTURES, INVALID_SOURCE } from "./fixtures";

const GOLDENS: { max_depth: Record<string, number> } = JSON.parse(
  readFileSync(join(__dirname, "..", "goldens.json"), "utf-8")
);

describe("fixture corpus", () => {
  for (const fixture of FIXTURES) {
    it(`matches hand-computed counts: ${fixture.name}`, () => {
      const record = computeMetrics(fixture.source);
      expect(record.parse_ok).toBe(true);
      expect(record.function_count).toBe(fixture.functionCount);
      expect(record.has_helper).toBe(fixture.hasHelper);
    });

    it(`matches frozen depth golden: ${fixture.name}`, () => {
      const record = computeMetrics(fixture.source);
      expect(record.max_depth).toBe(GOLDENS.max_depth[fixture.name]);
    });
  }

  it("covers all ten fixtures", () => {
    expect(FIXTURES.length).toBe(10);
    expect(Object.keys(GOLDENS.max_depth).length).toBe(10);
  });
});

describe("invalid source", () => {
  it("reports parse_ok=false with no metric fields", () => {
    const record = computeMetrics(INVALID_SOURCE);
    expect(record.parse_ok).toBe(false);
    expect(record.function_count).toBeUndefined();
    expect(record.has_helper).toBeUndefined();
    expect(record.max_depth).toBeUndefined();
  });

  it("still carries the protocol version", () => {
    expect(computeMetrics(INVALID_SOURCE).protocol_version).toBe(PROTOCOL_VERSION);
  });
});

describe("determinism", () => {
  it("identical source gives identical records across 100 invocations", () => {
    for (const fixture of FIXTURES) {
      const lines = new Set<string>();
      for (let i = 0; i < 100; i++) {
        lines.add(serializeRecord(computeMetrics(fixture.source)));
      }
      expect(lines.size).toBe(1);
    }
  });
});

describe("structural invariants", () => {
  it("any program with a statement has depth >= 2", () => {
    for (const fixture of FIXTURES) {
      if (fixture.source.trim().length > 0) {
        expect(computeMetrics(fixture.source).max_depth).toBeGreaterThanOrEqual(2);
      }
    }
  });

  it("empty module is depth 1 with no functions", () => {
    const record = computeMetrics("");
    expect(record).toMatchObject({
      parse_ok: true,
      function_count: 0,
      has_helper: false,
      max_depth: 1,
    });
  });

  it("adding a function definition never lowers has_helper", () => {
    const base = "def a():\n    return 1\n";
    const grown = base + "\ndef b():\n    return 2\n";
    const baseRecord = computeMetrics(base);
    const grownRecord = computeMetrics(grown);
    expect(Number(grownRecord.has_helper)).toBeGreaterThanOrEqual(Number(baseRecord.has_helper));
  });

  it("lambdas are not function definitions", () => {
    const record = computeMetrics("g = lambda: (lambda: 1)()\n");
    expect(record.function_count).toBe(0);
  });
});

describe("wire format", () => {
  it("serializes one stable line for ok records", () => {
    const line = serializeRecord(computeMetrics("print(1)\n"));
    const parsed = JSON.parse(line);
    expect(Object.keys(parsed)).toEqual([
      "protocol_version",
      "parse_ok",
      "function_count",
      "has_helper",
      "max_depth",
    ]);
    expect(line.includes("\n")).toBe(false);
  });

  it("omits metric fields for parse failures", () => {
    const parsed = JSON.parse(serializeRecord(computeMetrics(INVALID_SOURCE)));
    expect(Object.keys(parsed)).toEqual(["protocol_version", "parse_ok"]);
  });
});
