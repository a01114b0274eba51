/**
 * Walks an annotated image folder, runs the toy backbone pyramid, and writes
 * the xferod tensor container: per-level NPY feature maps with exact scale
 * ratios, annotations rescaled to the resized input, and optionally one fc
 * feature row per object from an ROI-Align + dense head.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { LEVEL_CHANNELS, ToyBackbone, gaussianMatrix, seededRng } from "./backbone.js";
import { loadAnnotations } from "./coco.js";
import { decodePnm, resize } from "./image.js";
import { writeNpy } from "./npy.js";
import { roiAlign } from "./roialign.js";

export const INPUT_SIZE = 800;
export const FC_DIM = 16;

export interface ExportSpec {
  model: string;
  imageDir: string;
  annotations: string;
  levels: string[]; // pyramid level keys, e.g. ["2", "3", "4", "5"]
  includeFc: boolean;
  outDir: string;
}

export interface ExportReport {
  manifestPath: string;
  imageCount: number;
  objectCount: number;
  droppedObjects: number;
  warnings: string[];
}

interface ManifestObject {
  image_id: string;
  class_id: number;
  bbox: [number, number, number, number];
}

function clipToInput(
  bbox: [number, number, number, number],
): [number, number, number, number] | null {
  const x0 = Math.min(Math.max(bbox[0], 0), INPUT_SIZE);
  const y0 = Math.min(Math.max(bbox[1], 0), INPUT_SIZE);
  const x1 = Math.min(Math.max(bbox[0] + bbox[2], 0), INPUT_SIZE);
  const y1 = Math.min(Math.max(bbox[1] + bbox[3], 0), INPUT_SIZE);
  if (x1 - x0 <= 0 || y1 - y0 <= 0) return null;
  return [x0, y0, x1 - x0, y1 - y0];
}

export function exportContainer(spec: ExportSpec): ExportReport {
  if (spec.levels.length === 0) {
    throw new Error("at least one pyramid level must be requested");
  }
  for (const key of spec.levels) {
    const k = Number.parseInt(key, 10);
    if (!(k >= 2 && k <= 5)) throw new Error(`unsupported level ${key}; toy backbone has 2..5`);
  }
  const annotations = loadAnnotations(spec.annotations);

  const missing = annotations.images.filter(
    (img) => !fs.existsSync(path.join(spec.imageDir, img.file_name)),
  );
  if (missing.length > 0) {
    throw new Error(
      `annotation/image mismatch: missing files\n  ${missing.map((m) => m.file_name).join("\n  ")}`,
    );
  }

  const tensorDir = path.join(spec.outDir, "tensors");
  fs.mkdirSync(tensorDir, { recursive: true });

  const warnings: string[] = [];
  const backbone = new ToyBackbone(spec.model, 3);
  const headRng = seededRng(`${spec.model}/fc-head`);
  const headW = gaussianMatrix(headRng, FC_DIM, LEVEL_CHANNELS * 7 * 7);

  const scales = new Map<string, number>();
  const manifestImages: object[] = [];
  const manifestObjects: ManifestObject[] = [];
  let dropped = 0;

  const byImage = new Map<number, typeof annotations.annotations>();
  for (const ann of annotations.annotations) {
    if (!byImage.has(ann.image_id)) byImage.set(ann.image_id, []);
    byImage.get(ann.image_id)!.push(ann);
  }

  for (const cocoImage of annotations.images) {
    const imageId = `img${cocoImage.id}`;
    let decoded = decodePnm(path.join(spec.imageDir, cocoImage.file_name));
    if (decoded.channels === 1) {
      // replicate gray to RGB so one backbone serves both
      const rgb = new Float32Array(3 * decoded.height * decoded.width);
      for (let c = 0; c < 3; c++) rgb.set(decoded.data, c * decoded.height * decoded.width);
      decoded = { channels: 3, height: decoded.height, width: decoded.width, data: rgb };
    }
    const scaleX = INPUT_SIZE / decoded.width;
    const scaleY = INPUT_SIZE / decoded.height;
    const input = resize(decoded, INPUT_SIZE, INPUT_SIZE);
    const pyramid = backbone.forward(input, spec.levels);

    const levelPaths: Record<string, string> = {};
    for (const key of spec.levels) {
      const fmap = pyramid.levels.get(key)!;
      const s = INPUT_SIZE / fmap.width;
      if (!Number.isInteger(s) || INPUT_SIZE / fmap.height !== s) {
        throw new Error(`level ${key}: scale ${s} is not exact`);
      }
      const known = scales.get(key);
      if (known !== undefined && known !== s) {
        throw new Error(`level ${key}: inconsistent scale ${s} vs ${known}`);
      }
      scales.set(key, s);
      const rel = path.join("tensors", `${imageId}_${key}.npy`);
      writeNpy(path.join(spec.outDir, rel), {
        shape: [fmap.channels, fmap.height, fmap.width],
        data: fmap.data,
      });
      levelPaths[key] = rel;
    }

    const survivors: ManifestObject[] = [];
    for (const ann of byImage.get(cocoImage.id) ?? []) {
      const rescaled: [number, number, number, number] = [
        ann.bbox[0] * scaleX,
        ann.bbox[1] * scaleY,
        ann.bbox[2] * scaleX,
        ann.bbox[3] * scaleY,
      ];
      const clipped = clipToInput(rescaled);
      if (clipped === null) {
        warnings.push(`${imageId}: box ${ann.bbox} clips to zero area; dropped`);
        dropped++;
        continue;
      }
      survivors.push({
        image_id: imageId,
        class_id: annotations.classOf.get(ann.category_id)!,
        bbox: clipped,
      });
    }
    manifestObjects.push(...survivors);

    const entry: Record<string, unknown> = {
      id: imageId,
      width: INPUT_SIZE,
      height: INPUT_SIZE,
      levels: levelPaths,
    };

    if (spec.includeFc && survivors.length > 0) {
      const headLevel = spec.levels[spec.levels.length - 1];
      const fmap = pyramid.levels.get(headLevel)!;
      const s = scales.get(headLevel)!;
      const rows = new Float32Array(survivors.length * FC_DIM);
      survivors.forEach((obj, row) => {
        const pooled = roiAlign(fmap, obj.bbox, s, 7, 2);
        for (let d = 0; d < FC_DIM; d++) {
          let acc = 0;
          for (let j = 0; j < pooled.length; j++) acc += headW[d * pooled.length + j] * pooled[j];
          rows[row * FC_DIM + d] = Math.tanh(acc / Math.sqrt(pooled.length));
        }
      });
      const rel = path.join("tensors", `${imageId}_fc.npy`);
      writeNpy(path.join(spec.outDir, rel), { shape: [survivors.length, FC_DIM], data: rows });
      entry.fc = rel;
    }
    manifestImages.push(entry);
  }

  const manifest = {
    meta: {
      num_classes: annotations.numClasses,
      scales: Object.fromEntries([...scales.entries()].sort()),
    },
    images: manifestImages,
    objects: manifestObjects,
  };
  const manifestPath = path.join(spec.outDir, "manifest.json");
  fs.writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + "\n");

  return {
    manifestPath,
    imageCount: annotations.images.length,
    objectCount: manifestObjects.length,
    droppedObjects: dropped,
    warnings,
  };
}
