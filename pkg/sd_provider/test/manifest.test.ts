import { readFile } from "node:fs/promises";
import * as path from "node:path";
import { describe, expect, it } from "vitest";

import { loadManifest, parseManifest } from "../src/manifest.js";

const FIXTURES = path.join(__dirname, "fixtures");

describe("manifest", () => {
  it("loads the fixture manifest", async () => {
    const manifest = await loadManifest(path.join(FIXTURES, "manifest.json"));
    expect(manifest.schema).toBe(1);
    expect(manifest.levels).toHaveLength(2);
    expect(manifest.levels[0].views).toHaveLength(2);
    expect(manifest.levels[0].prompt).toBe("weathered bronze shell");
    expect(manifest.view_resolution).toEqual([48, 48]);
    expect(manifest.baseDir).toBe(FIXTURES);
  });

  it("rejects unknown schema versions", async () => {
    const text = await readFile(path.join(FIXTURES, "manifest.json"), "utf-8");
    const data = JSON.parse(text);
    data.schema = 2;
    expect(() => parseManifest(JSON.stringify(data), FIXTURES)).toThrow(/schema/);
  });

  it("rejects duplicate (level, view) entries", async () => {
    const text = await readFile(path.join(FIXTURES, "manifest.json"), "utf-8");
    const data = JSON.parse(text);
    data.levels[0].views.push(data.levels[0].views[0]);
    expect(() => parseManifest(JSON.stringify(data), FIXTURES)).toThrow(/duplicate/);
  });

  it("rejects malformed JSON and missing fields", () => {
    expect(() => parseManifest("{nope", FIXTURES)).toThrow(/not valid JSON/);
    expect(() => parseManifest("{}", FIXTURES)).toThrow(/invalid manifest/);
  });
});
