/**
 * COCO-style annotation parsing: images, xywh boxes, category ids.
 *
 * Category ids are remapped to contiguous class ids by sorted category id.
 */

import * as fs from "node:fs";

export interface CocoImage {
  id: number;
  file_name: string;
  width: number;
  height: number;
}

export interface CocoAnnotation {
  image_id: number;
  bbox: [number, number, number, number];
  category_id: number;
}

export interface Annotations {
  images: CocoImage[];
  annotations: CocoAnnotation[];
  numClasses: number;
  classOf: Map<number, number>; // category_id -> contiguous class id
}

export function loadAnnotations(path: string): Annotations {
  const doc = JSON.parse(fs.readFileSync(path, "utf-8"));
  if (!Array.isArray(doc.images) || !Array.isArray(doc.annotations) || !Array.isArray(doc.categories)) {
    throw new Error(`${path}: need images[], annotations[], categories[]`);
  }
  const images: CocoImage[] = doc.images.map((img: any) => {
    if (typeof img.id !== "number" || typeof img.file_name !== "string") {
      throw new Error(`${path}: image entries need numeric id and file_name`);
    }
    return { id: img.id, file_name: img.file_name, width: img.width, height: img.height };
  });

  const categoryIds: number[] = doc.categories.map((c: any) => c.id);
  const classOf = new Map<number, number>();
  [...categoryIds].sort((a, b) => a - b).forEach((cid, index) => classOf.set(cid, index));

  const knownImages = new Set(images.map((img) => img.id));
  const problems: string[] = [];
  const annotations: CocoAnnotation[] = [];
  doc.annotations.forEach((ann: any, index: number) => {
    if (!knownImages.has(ann.image_id)) {
      problems.push(`annotation ${index}: unknown image_id ${ann.image_id}`);
      return;
    }
    if (!classOf.has(ann.category_id)) {
      problems.push(`annotation ${index}: unknown category_id ${ann.category_id}`);
      return;
    }
    if (!Array.isArray(ann.bbox) || ann.bbox.length !== 4) {
      problems.push(`annotation ${index}: bbox must be [x, y, w, h]`);
      return;
    }
    annotations.push({
      image_id: ann.image_id,
      bbox: [ann.bbox[0], ann.bbox[1], ann.bbox[2], ann.bbox[3]],
      category_id: ann.category_id,
    });
  });
  if (problems.length > 0) {
    throw new Error(`${path}: annotation/image mismatch:\n  ${problems.join("\n  ")}`);
  }
  return { images, annotations, numClasses: categoryIds.length, classOf };
}
