/**
 * Binary PPM/PGM decoding and bilinear resize.
 *
 * Images are planar float arrays in [0, 1], channels-first (C, H, W).
 */

import * as fs from "node:fs";

export interface Image {
  channels: number;
  height: number;
  width: number;
  data: Float32Array; // planar C*H*W
}

export function decodePnm(path: string): Image {
  const raw = fs.readFileSync(path);
  const magic = raw.subarray(0, 2).toString("ascii");
  if (magic !== "P6" && magic !== "P5") {
    throw new Error(`${path}: unsupported image format ${magic} (need binary PPM/PGM)`);
  }
  const channels = magic === "P6" ? 3 : 1;

  // header: magic, width, height, maxval as whitespace-separated tokens,
  // with optional # comments
  let pos = 2;
  const tokens: number[] = [];
  while (tokens.length < 3) {
    while (pos < raw.length && /\s/.test(String.fromCharCode(raw[pos]))) pos++;
    if (raw[pos] === 0x23) {
      while (pos < raw.length && raw[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < raw.length && !/\s/.test(String.fromCharCode(raw[pos]))) pos++;
    tokens.push(Number.parseInt(raw.subarray(start, pos).toString("ascii"), 10));
  }
  pos++; // single whitespace after maxval
  const [width, height, maxval] = tokens;
  if (!(width >= 1 && height >= 1)) throw new Error(`${path}: bad dimensions`);
  if (maxval !== 255) throw new Error(`${path}: only maxval 255 supported`);

  const expected = width * height * channels;
  const pixels = raw.subarray(pos);
  if (pixels.length < expected) throw new Error(`${path}: truncated pixel data`);

  const data = new Float32Array(channels * height * width);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      for (let c = 0; c < channels; c++) {
        data[c * height * width + y * width + x] =
          pixels[(y * width + x) * channels + c] / 255;
      }
    }
  }
  return { channels, height, width, data };
}

/** Bilinear resize with half-pixel-centered sampling. */
export function resize(image: Image, outHeight: number, outWidth: number): Image {
  const { channels, height, width, data } = image;
  const out = new Float32Array(channels * outHeight * outWidth);
  const scaleY = height / outHeight;
  const scaleX = width / outWidth;
  for (let y = 0; y < outHeight; y++) {
    const sy = Math.min(Math.max((y + 0.5) * scaleY - 0.5, 0), height - 1);
    const y0 = Math.floor(sy);
    const y1 = Math.min(y0 + 1, height - 1);
    const fy = sy - y0;
    for (let x = 0; x < outWidth; x++) {
      const sx = Math.min(Math.max((x + 0.5) * scaleX - 0.5, 0), width - 1);
      const x0 = Math.floor(sx);
      const x1 = Math.min(x0 + 1, width - 1);
      const fx = sx - x0;
      for (let c = 0; c < channels; c++) {
        const plane = c * height * width;
        const v =
          (1 - fy) * (1 - fx) * data[plane + y0 * width + x0] +
          (1 - fy) * fx * data[plane + y0 * width + x1] +
          fy * (1 - fx) * data[plane + y1 * width + x0] +
          fy * fx * data[plane + y1 * width + x1];
        out[c * outHeight * outWidth + y * outWidth + x] = v;
      }
    }
  }
  return { channels, height: outHeight, width: outWidth, data: out };
}
