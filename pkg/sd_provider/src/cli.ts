#!/usr/bin/env node
/**
 * sd_provider: consume a render manifest, emit one image per (level, view).
 *
 *   sd_provider --manifest m.json --out dir --seed N [--dry-run] [--jobs J]
 *               [--backend-url URL]
 *
 * Exit codes: 0 all jobs succeeded, 1 some jobs failed, 2 usage/manifest error.
 */

import { mkdir } from "node:fs/promises";
import { parseArgs } from "node:util";

import { buildJobs, runJobs } from "./jobs.js";
import { loadManifest } from "./manifest.js";

export interface CliResult {
  exitCode: number;
  written: number;
  failed: number;
}

export async function run(argv: string[]): Promise<CliResult> {
  let values;
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        manifest: { type: "string", short: "m" },
        out: { type: "string", short: "o" },
        seed: { type: "string", short: "s", default: "0" },
        "dry-run": { type: "boolean", default: false },
        jobs: { type: "string", short: "j", default: "4" },
        "backend-url": { type: "string" },
      },
    }));
  } catch (err) {
    console.error((err as Error).message);
    return { exitCode: 2, written: 0, failed: 0 };
  }

  if (!values.manifest || !values.out) {
    console.error(
      "usage: sd_provider --manifest m.json --out dir --seed N [--dry-run] [--jobs J] [--backend-url URL]",
    );
    return { exitCode: 2, written: 0, failed: 0 };
  }
  const seed = Number.parseInt(values.seed ?? "0", 10);
  const jobsBound = Number.parseInt(values.jobs ?? "4", 10);
  if (Number.isNaN(seed) || Number.isNaN(jobsBound) || jobsBound < 1) {
    console.error("--seed and --jobs must be integers (jobs >= 1)");
    return { exitCode: 2, written: 0, failed: 0 };
  }

  let manifest;
  try {
    manifest = await loadManifest(values.manifest);
  } catch (err) {
    console.error((err as Error).message);
    return { exitCode: 2, written: 0, failed: 0 };
  }

  await mkdir(values.out, { recursive: true });
  const jobs = buildJobs(manifest, values.out, seed);
  console.error(
    `${jobs.length} jobs (${manifest.levels.length} levels), ` +
      `${values["dry-run"] ? "dry-run depth visualizations" : "backend generation"}`,
  );
  const failures = await runJobs(jobs, manifest, {
    dryRun: values["dry-run"] ?? false,
    jobs: jobsBound,
    backendUrl: values["backend-url"],
  });
  for (const failure of failures) {
    console.error(
      `FAILED level ${failure.job.level} view ${failure.job.view}: ${failure.error}`,
    );
  }
  const written = jobs.length - failures.length;
  console.error(`${written}/${jobs.length} images written`);
  return { exitCode: failures.length > 0 ? 1 : 0, written, failed: failures.length };
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;

if (invokedDirectly) {
  run(process.argv.slice(2)).then(
    (result) => process.exit(result.exitCode),
    (err) => {
      console.error(err);
      process.exit(2);
    },
  );
}
