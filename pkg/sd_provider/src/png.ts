/**
 * Minimal PNG codec: decodes non-interlaced grayscale/RGB(A) at 8 or 16 bits,
 * encodes 8-bit RGB. Depth maps are 16-bit grayscale where the exact value
 * 65535 marks a miss, so the decode path must not rescale bit depths.
 */

import * as zlib from "node:zlib";

const PNG_SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

export interface GrayImage16 {
  width: number;
  height: number;
  /** row-major, length width * height */
  data: Uint16Array;
}

export interface RgbImage {
  width: number;
  height: number;
  /** row-major RGB triples, length width * height * 3 */
  data: Uint8Array;
}

interface Header {
  width: number;
  height: number;
  bitDepth: number;
  colorType: number;
  interlace: number;
}

const CHANNELS: Record<number, number> = { 0: 1, 2: 3, 4: 2, 6: 4 };

function parseChunks(buf: Buffer): { header: Header; idat: Buffer } {
  if (!buf.subarray(0, 8).equals(PNG_SIGNATURE)) {
    throw new Error("not a PNG file");
  }
  let offset = 8;
  let header: Header | null = null;
  const idatParts: Buffer[] = [];
  while (offset + 8 <= buf.length) {
    const length = buf.readUInt32BE(offset);
    const type = buf.toString("ascii", offset + 4, offset + 8);
    const data = buf.subarray(offset + 8, offset + 8 + length);
    if (type === "IHDR") {
      header = {
        width: data.readUInt32BE(0),
        height: data.readUInt32BE(4),
        bitDepth: data.readUInt8(8),
        colorType: data.readUInt8(9),
        interlace: data.readUInt8(12),
      };
    } else if (type === "IDAT") {
      idatParts.push(data);
    } else if (type === "IEND") {
      break;
    }
    offset += 12 + length;
  }
  if (!header) throw new Error("PNG has no IHDR chunk");
  if (idatParts.length === 0) throw new Error("PNG has no IDAT data");
  if (header.interlace !== 0) throw new Error("interlaced PNG not supported");
  if (!(header.colorType in CHANNELS)) {
    throw new Error(`unsupported PNG color type ${header.colorType}`);
  }
  return { header, idat: Buffer.concat(idatParts) };
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

/** Undo per-scanline filters in place, returning raw sample bytes. */
function unfilter(raw: Buffer, width: number, height: number, bpp: number): Buffer {
  const stride = width * bpp;
  const out = Buffer.alloc(stride * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const line = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const prev = y > 0 ? out.subarray((y - 1) * stride, y * stride) : null;
    const cur = out.subarray(y * stride, (y + 1) * stride);
    for (let x = 0; x < stride; x++) {
      const a = x >= bpp ? cur[x - bpp] : 0;
      const b = prev ? prev[x] : 0;
      const c = x >= bpp && prev ? prev[x - bpp] : 0;
      let v = line[x];
      switch (filter) {
        case 0: break;
        case 1: v = (v + a) & 0xff; break;
        case 2: v = (v + b) & 0xff; break;
        case 3: v = (v + ((a + b) >> 1)) & 0xff; break;
        case 4: v = (v + paeth(a, b, c)) & 0xff; break;
        default: throw new Error(`unknown PNG filter ${filter}`);
      }
      cur[x] = v;
    }
  }
  return out;
}

/** Decode any supported PNG to 16-bit grayscale (color averages to luma). */
export function decodeGray16(buf: Buffer): GrayImage16 {
  const { header, idat } = parseChunks(buf);
  const { width, height, bitDepth, colorType } = header;
  if (bitDepth !== 8 && bitDepth !== 16) {
    throw new Error(`unsupported PNG bit depth ${bitDepth}`);
  }
  const channels = CHANNELS[colorType];
  const bpp = (channels * bitDepth) / 8;
  const raw = zlib.inflateSync(idat);
  const bytes = unfilter(raw, width, height, bpp);
  const out = new Uint16Array(width * height);
  const scale = bitDepth === 8 ? 257 : 1; // 8-bit 255 -> 65535
  for (let i = 0; i < width * height; i++) {
    const base = i * bpp;
    let value: number;
    if (bitDepth === 16) {
      value = bytes.readUInt16BE(base); // first channel
      if (channels >= 3) {
        const g = bytes.readUInt16BE(base + 2);
        const b = bytes.readUInt16BE(base + 4);
        value = Math.round((value + g + b) / 3);
      }
    } else {
      value = bytes[base];
      if (channels >= 3) {
        value = Math.round((value + bytes[base + 1] + bytes[base + 2]) / 3);
      }
    }
    out[i] = value * scale;
  }
  return { width, height, data: out };
}

/** Decode any supported PNG to 8-bit RGB (16-bit scaled down, luma replicated). */
export function decodeRgb8(buf: Buffer): RgbImage {
  const { header, idat } = parseChunks(buf);
  const { width, height, bitDepth, colorType } = header;
  if (bitDepth !== 8 && bitDepth !== 16) {
    throw new Error(`unsupported PNG bit depth ${bitDepth}`);
  }
  const channels = CHANNELS[colorType];
  const bpp = (channels * bitDepth) / 8;
  const bytes = unfilter(zlib.inflateSync(idat), width, height, bpp);
  const out = new Uint8Array(width * height * 3);
  const step = bitDepth / 8;
  for (let i = 0; i < width * height; i++) {
    const base = i * bpp;
    const read = (c: number) =>
      bitDepth === 16 ? bytes.readUInt16BE(base + c * step) >> 8 : bytes[base + c];
    if (channels >= 3) {
      out[i * 3] = read(0);
      out[i * 3 + 1] = read(1);
      out[i * 3 + 2] = read(2);
    } else {
      const v = read(0);
      out[i * 3] = v;
      out[i * 3 + 1] = v;
      out[i * 3 + 2] = v;
    }
  }
  return { width, height, data: out };
}

function chunk(type: string, data: Buffer): Buffer {
  const out = Buffer.alloc(data.length + 12);
  out.writeUInt32BE(data.length, 0);
  out.write(type, 4, "ascii");
  data.copy(out, 8);
  out.writeUInt32BE(crc32(out.subarray(4, 8 + data.length)), 8 + data.length);
  return out;
}

let CRC_TABLE: Uint32Array | null = null;

function crc32(buf: Buffer): number {
  if (!CRC_TABLE) {
    CRC_TABLE = new Uint32Array(256);
    for (let n = 0; n < 256; n++) {
      let c = n;
      for (let k = 0; k < 8; k++) {
        c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
      }
      CRC_TABLE[n] = c >>> 0;
    }
  }
  let crc = 0xffffffff;
  for (const byte of buf) {
    crc = CRC_TABLE[(crc ^ byte) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

/** Encode an 8-bit RGB image (filter 0 scanlines, single IDAT). */
export function encodeRgb(image: RgbImage): Buffer {
  const { width, height, data } = image;
  if (data.length !== width * height * 3) {
    throw new Error("rgb data length does not match dimensions");
  }
  const stride = width * 3;
  const raw = Buffer.alloc((stride + 1) * height);
  for (let y = 0; y < height; y++) {
    raw[y * (stride + 1)] = 0; // filter: none
    Buffer.from(data.buffer, data.byteOffset + y * stride, stride).copy(
      raw,
      y * (stride + 1) + 1,
    );
  }
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr.writeUInt8(8, 8); // bit depth
  ihdr.writeUInt8(2, 9); // color type: RGB
  ihdr.writeUInt8(0, 10); // compression
  ihdr.writeUInt8(0, 11); // filter method
  ihdr.writeUInt8(0, 12); // no interlace
  const idat = zlib.deflateSync(raw, { level: 6 });
  return Buffer.concat([
    PNG_SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("IDAT", idat),
    chunk("IEND", Buffer.alloc(0)),
  ]);
}
