/**
 * Generation jobs: one per (level, view), each pairing the level's prompt
 * (plus a view-direction cue) with its depth map. Jobs run concurrently up to
 * a bound; a failed job is recorded and the rest continue.
 */

import { mkdir, readFile, rename, writeFile } from "node:fs/promises";
import * as path from "node:path";

import { Camera, Manifest } from "./manifest.js";
import { decodeGray16, encodeRgb, GrayImage16 } from "./png.js";
import { depthVisualization } from "./depthviz.js";
import { generateWithBackend } from "./backend.js";

export interface GenerationJob {
  level: number;
  view: number;
  prompt: string;
  depthPath: string;
  outputPath: string;
  seed: number;
}

export interface JobFailure {
  job: GenerationJob;
  error: string;
}

export interface RunOptions {
  dryRun: boolean;
  jobs: number;
  backendUrl?: string;
}

/** Direction bucket of a camera relative to its target, as a prompt suffix. */
export function viewCue(camera: Camera): string {
  const dx = camera.position[0] - camera.look_at[0];
  const dy = camera.position[1] - camera.look_at[1];
  const dz = camera.position[2] - camera.look_at[2];
  const len = Math.hypot(dx, dy, dz);
  const elevation = (Math.asin(dz / len) * 180) / Math.PI;
  if (elevation > 67.5) return "top view";
  let azimuth = (Math.atan2(dy, dx) * 180) / Math.PI;
  if (azimuth < 0) azimuth += 360;
  if (azimuth < 45 || azimuth >= 315) return "front view";
  if (azimuth < 135) return "left view";
  if (azimuth < 225) return "back view";
  return "right view";
}

export function outputName(level: number, view: number): string {
  return `view_L${level}_V${String(view).padStart(2, "0")}.png`;
}

export function buildJobs(manifest: Manifest, outDir: string, seed: number): GenerationJob[] {
  const jobs: GenerationJob[] = [];
  for (const level of manifest.levels) {
    for (const view of level.views) {
      const cue = viewCue(view.camera);
      jobs.push({
        level: level.level,
        view: view.view,
        prompt: level.prompt ? `${level.prompt}, ${cue}` : cue,
        depthPath: path.resolve(manifest.baseDir, view.depth_path),
        outputPath: path.join(outDir, outputName(level.level, view.view)),
        seed: seed + level.level * 1000 + view.view,
      });
    }
  }
  return jobs;
}

async function readDepth(job: GenerationJob, manifest: Manifest): Promise<GrayImage16> {
  let buf: Buffer;
  try {
    buf = await readFile(job.depthPath);
  } catch {
    throw new Error(`missing depth map: ${job.depthPath}`);
  }
  const depth = decodeGray16(buf);
  const [w, h] = manifest.view_resolution;
  if (depth.width !== w || depth.height !== h) {
    throw new Error(
      `depth map ${job.depthPath} is ${depth.width}x${depth.height}, manifest requires ${w}x${h}`,
    );
  }
  return depth;
}

async function writeAtomic(filePath: string, data: Buffer): Promise<void> {
  const tmp = `${filePath}.tmp-${process.pid}`;
  await writeFile(tmp, data);
  await rename(tmp, filePath);
}

export async function runJob(
  job: GenerationJob,
  manifest: Manifest,
  options: RunOptions,
): Promise<void> {
  const depth = await readDepth(job, manifest);
  let image;
  if (options.dryRun) {
    image = depthVisualization(depth, job.seed);
  } else {
    if (!options.backendUrl) {
      throw new Error("no generation backend configured (use --backend-url or --dry-run)");
    }
    image = await generateWithBackend(options.backendUrl, job, depth);
  }
  await writeAtomic(job.outputPath, encodeRgb(image));
}

export async function runJobs(
  jobs: GenerationJob[],
  manifest: Manifest,
  options: RunOptions,
): Promise<JobFailure[]> {
  await mkdir(path.dirname(jobs[0]?.outputPath ?? "."), { recursive: true });
  const failures: JobFailure[] = [];
  const queue = [...jobs];
  const workers = Math.max(1, options.jobs);

  async function worker(): Promise<void> {
    for (;;) {
      const job = queue.shift();
      if (!job) return;
      try {
        await runJob(job, manifest, options);
      } catch (err) {
        failures.push({ job, error: (err as Error).message });
      }
    }
  }

  await Promise.all(Array.from({ length: workers }, worker));
  return failures;
}
