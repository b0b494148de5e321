/** Render-manifest parsing and validation (schema 1). */

import { readFile } from "node:fs/promises";
import * as path from "node:path";
import { z } from "zod";

const cameraSchema = z.object({
  position: z.array(z.number()).length(3),
  look_at: z.array(z.number()).length(3),
  up: z.array(z.number()).length(3),
  fov_deg: z.number().positive(),
  resolution: z.array(z.number().int().positive()).length(2),
  near: z.number().positive(),
  far: z.number().positive(),
});

const viewSchema = z.object({
  view: z.number().int().nonnegative(),
  depth_path: z.string().min(1),
  camera: cameraSchema,
});

const levelSchema = z.object({
  level: z.number().int().positive(),
  prompt: z.string(),
  views: z.array(viewSchema).min(1),
});

const manifestSchema = z.object({
  schema: z.literal(1),
  mesh: z.string(),
  view_resolution: z.array(z.number().int().positive()).length(2),
  near: z.number().positive(),
  far: z.number().positive(),
  levels: z.array(levelSchema).min(1),
});

export type Camera = z.infer<typeof cameraSchema>;
export type ManifestLevel = z.infer<typeof levelSchema>;
export type Manifest = z.infer<typeof manifestSchema> & { baseDir: string };

export function parseManifest(jsonText: string, baseDir: string): Manifest {
  let data: unknown;
  try {
    data = JSON.parse(jsonText);
  } catch (err) {
    throw new Error(`manifest is not valid JSON: ${(err as Error).message}`);
  }
  const parsed = manifestSchema.safeParse(data);
  if (!parsed.success) {
    const issue = parsed.error.issues[0];
    throw new Error(`invalid manifest: ${issue.path.join(".")}: ${issue.message}`);
  }
  const seen = new Set<string>();
  for (const level of parsed.data.levels) {
    for (const view of level.views) {
      const key = `${level.level}/${view.view}`;
      if (seen.has(key)) {
        throw new Error(`invalid manifest: duplicate entry for level ${level.level} view ${view.view}`);
      }
      seen.add(key);
    }
  }
  return { ...parsed.data, baseDir };
}

export async function loadManifest(manifestPath: string): Promise<Manifest> {
  const text = await readFile(manifestPath, "utf-8");
  return parseManifest(text, path.dirname(path.resolve(manifestPath)));
}
