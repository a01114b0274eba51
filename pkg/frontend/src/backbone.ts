/**
 * Deterministic toy backbone pyramid.
 *
 * Stands in for a frozen detector: repeated stride-2 average pooling builds
 * levels k = 2..5 (stride 2^k), each mixed to a fixed channel width with
 * weights seeded by the model identifier. Region proposals never exist in
 * this path; features are computed for the whole image and objects are cut
 * out later with ground-truth boxes.
 */

import type { Image } from "./image.js";

export const LEVEL_CHANNELS = 8;

/** fnv1a string hash -> mulberry32 PRNG, stable across runs and platforms. */
export function seededRng(key: string): () => number {
  let h = 0x811c9dc5;
  for (let i = 0; i < key.length; i++) {
    h ^= key.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  let state = h >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gaussianPair(rng: () => number): [number, number] {
  const u = Math.max(rng(), 1e-12);
  const v = rng();
  const r = Math.sqrt(-2 * Math.log(u));
  return [r * Math.cos(2 * Math.PI * v), r * Math.sin(2 * Math.PI * v)];
}

export function gaussianMatrix(rng: () => number, rows: number, cols: number): Float64Array {
  const out = new Float64Array(rows * cols);
  for (let i = 0; i < out.length; i += 2) {
    const [a, b] = gaussianPair(rng);
    out[i] = a;
    if (i + 1 < out.length) out[i + 1] = b;
  }
  return out;
}

function avgPool2(image: Image): Image {
  const { channels, height, width, data } = image;
  const oh = Math.floor(height / 2);
  const ow = Math.floor(width / 2);
  const out = new Float32Array(channels * oh * ow);
  for (let c = 0; c < channels; c++) {
    const src = c * height * width;
    const dst = c * oh * ow;
    for (let y = 0; y < oh; y++) {
      for (let x = 0; x < ow; x++) {
        out[dst + y * ow + x] =
          0.25 *
          (data[src + 2 * y * width + 2 * x] +
            data[src + 2 * y * width + 2 * x + 1] +
            data[src + (2 * y + 1) * width + 2 * x] +
            data[src + (2 * y + 1) * width + 2 * x + 1]);
      }
    }
  }
  return { channels, height: oh, width: ow, data: out };
}

function mixChannels(image: Image, weights: Float64Array, bias: Float64Array): Image {
  const { channels, height, width, data } = image;
  const out = new Float32Array(LEVEL_CHANNELS * height * width);
  for (let co = 0; co < LEVEL_CHANNELS; co++) {
    const dst = co * height * width;
    for (let p = 0; p < height * width; p++) {
      let acc = bias[co];
      for (let ci = 0; ci < channels; ci++) {
        acc += weights[co * channels + ci] * data[ci * height * width + p];
      }
      out[dst + p] = Math.tanh(acc);
    }
  }
  return { channels: LEVEL_CHANNELS, height, width, data: out };
}

export interface Pyramid {
  /** level key (e.g. "2") -> feature map; stride of level k is 2^k */
  levels: Map<string, Image>;
}

export class ToyBackbone {
  private readonly weights = new Map<string, { w: Float64Array; b: Float64Array }>();

  constructor(private readonly model: string, private readonly inputChannels: number) {
    for (let k = 2; k <= 5; k++) {
      const rng = seededRng(`${model}/level${k}`);
      this.weights.set(String(k), {
        w: gaussianMatrix(rng, LEVEL_CHANNELS, inputChannels),
        b: gaussianMatrix(rng, LEVEL_CHANNELS, 1),
      });
    }
  }

  forward(image: Image, levelKeys: string[]): Pyramid {
    if (image.channels !== this.inputChannels) {
      throw new Error(`backbone expects ${this.inputChannels} channels, got ${image.channels}`);
    }
    const levels = new Map<string, Image>();
    let current = image;
    for (let k = 1; k <= 5; k++) {
      current = avgPool2(current);
      const key = String(k);
      if (k >= 2 && levelKeys.includes(key)) {
        const { w, b } = this.weights.get(key)!;
        levels.set(key, mixChannels(current, w, b));
      }
    }
    return { levels };
  }
}
