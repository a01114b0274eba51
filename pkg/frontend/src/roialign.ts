/**
 * Aligned ROI-Align over a planar feature map, used for the dense-layer
 * (fc) head: each bin averages a 2x2 grid of bilinear samples; samples more
 * than one cell outside the map read zero, border values extend half a cell.
 */

import type { Image } from "./image.js";

function bilinear(map: Image, c: number, y: number, x: number): number {
  const { height: h, width: w, data } = map;
  if (y < -1 || y > h || x < -1 || x > w) return 0;
  y = Math.max(y, 0);
  x = Math.max(x, 0);
  let yLo = Math.floor(y);
  let xLo = Math.floor(x);
  let yHi: number;
  let xHi: number;
  if (yLo >= h - 1) {
    yLo = yHi = h - 1;
    y = yLo;
  } else {
    yHi = yLo + 1;
  }
  if (xLo >= w - 1) {
    xLo = xHi = w - 1;
    x = xLo;
  } else {
    xHi = xLo + 1;
  }
  const fy = y - yLo;
  const fx = x - xLo;
  const plane = c * h * w;
  return (
    (1 - fy) * (1 - fx) * data[plane + yLo * w + xLo] +
    (1 - fy) * fx * data[plane + yLo * w + xHi!] +
    fy * (1 - fx) * data[plane + yHi! * w + xLo] +
    fy * fx * data[plane + yHi! * w + xHi!]
  );
}

export function roiAlign(
  map: Image,
  box: [number, number, number, number], // absolute-pixel xywh on the input image
  scale: number,
  pool = 7,
  samples = 2,
): Float32Array {
  const x0 = box[0] / scale - 0.5;
  const y0 = box[1] / scale - 0.5;
  const binW = box[2] / scale / pool;
  const binH = box[3] / scale / pool;
  const out = new Float32Array(map.channels * pool * pool);
  for (let c = 0; c < map.channels; c++) {
    for (let py = 0; py < pool; py++) {
      for (let px = 0; px < pool; px++) {
        let acc = 0;
        for (let sy = 0; sy < samples; sy++) {
          const yy = y0 + binH * (py + (sy + 0.5) / samples);
          for (let sx = 0; sx < samples; sx++) {
            const xx = x0 + binW * (px + (sx + 0.5) / samples);
            acc += bilinear(map, c, yy, xx);
          }
        }
        out[c * pool * pool + py * pool + px] = acc / (samples * samples);
      }
    }
  }
  return out;
}
