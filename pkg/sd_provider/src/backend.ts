/**
 * HTTP generation backend. The endpoint receives the prompt, seed, and the
 * depth map (16-bit grayscale PNG, base64) and must answer with a PNG image
 * at the same resolution:
 *
 *   POST {backendUrl}/generate
 *   { "prompt": string, "seed": number, "width": w, "height": h,
 *     "depth_png_base64": string }
 *   -> { "image_png_base64": string }
 */

import { GenerationJob } from "./jobs.js";
import { decodeRgb8, encodeRgb, GrayImage16, RgbImage } from "./png.js";

function grayToPngBase64(depth: GrayImage16): string {
  // conditioning models consume 8-bit depth; quantize, misses to black
  const rgb = new Uint8Array(depth.width * depth.height * 3);
  for (let i = 0; i < depth.data.length; i++) {
    const v = depth.data[i] === 65535 ? 0 : Math.round((depth.data[i] / 65534) * 255);
    rgb[i * 3] = v;
    rgb[i * 3 + 1] = v;
    rgb[i * 3 + 2] = v;
  }
  return encodeRgb({ width: depth.width, height: depth.height, data: rgb }).toString("base64");
}

export async function generateWithBackend(
  backendUrl: string,
  job: GenerationJob,
  depth: GrayImage16,
): Promise<RgbImage> {
  let response: Response;
  try {
    response = await fetch(`${backendUrl.replace(/\/$/, "")}/generate`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        prompt: job.prompt,
        seed: job.seed,
        width: depth.width,
        height: depth.height,
        depth_png_base64: grayToPngBase64(depth),
      }),
    });
  } catch (err) {
    throw new Error(`backend unavailable at ${backendUrl}: ${(err as Error).message}`);
  }
  if (!response.ok) {
    throw new Error(`backend error ${response.status}: ${await response.text()}`);
  }
  const body = (await response.json()) as { image_png_base64?: string };
  if (!body.image_png_base64) {
    throw new Error("backend response missing image_png_base64");
  }
  const png = Buffer.from(body.image_png_base64, "base64");
  const image = decodeRgb8(png);
  if (image.width !== depth.width || image.height !== depth.height) {
    throw new Error(
      `backend returned ${image.width}x${image.height}, expected ${depth.width}x${depth.height}`,
    );
  }
  return image;
}
