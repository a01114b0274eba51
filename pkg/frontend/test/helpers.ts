/** Test fixtures: deterministic PPM images and COCO-style annotations. */

import { Buffer } from "node:buffer";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

export function makeTempDir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), prefix));
}

/** Binary P6 PPM with a smooth per-image gradient pattern. */
export function writePpm(filePath: string, width: number, height: number, phase: number): void {
  const header = Buffer.from(`P6\n${width} ${height}\n255\n`, "ascii");
  const pixels = Buffer.alloc(width * height * 3);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = (y * width + x) * 3;
      pixels[i] = Math.floor(255 * (0.5 + 0.5 * Math.sin(phase + x / 17)));
      pixels[i + 1] = Math.floor(255 * (0.5 + 0.5 * Math.cos(phase + y / 23)));
      pixels[i + 2] = Math.floor((x * 3 + y * 5 + phase * 40) % 256);
    }
  }
  fs.writeFileSync(filePath, Buffer.concat([header, pixels]));
}

export interface ToyDataset {
  root: string;
  imageDir: string;
  annotationPath: string;
  objectsPerImage: number[];
}

/** Five images of varying sizes with 2-3 annotated objects each. */
export function buildToyDataset(): ToyDataset {
  const root = makeTempDir("xferod-export-");
  const imageDir = path.join(root, "images");
  fs.mkdirSync(imageDir);

  const sizes: Array<[number, number]> = [
    [320, 240],
    [640, 480],
    [200, 200],
    [480, 360],
    [256, 512],
  ];
  const images = sizes.map(([w, h], i) => {
    writePpm(path.join(imageDir, `im${i}.ppm`), w, h, i);
    return { id: i + 1, file_name: `im${i}.ppm`, width: w, height: h };
  });

  const annotations: object[] = [];
  const objectsPerImage: number[] = [];
  let annId = 1;
  images.forEach((img, i) => {
    const count = 2 + (i % 2);
    objectsPerImage.push(count);
    for (let j = 0; j < count; j++) {
      annotations.push({
        id: annId++,
        image_id: img.id,
        category_id: 10 + ((i + j) % 3) * 5, // non-contiguous ids on purpose
        bbox: [
          10 + 20 * j,
          8 + 12 * j,
          Math.floor(img.width / 3),
          Math.floor(img.height / 2.5),
        ],
      });
    }
  });

  const annotationPath = path.join(root, "coco.json");
  fs.writeFileSync(
    annotationPath,
    JSON.stringify(
      {
        images,
        annotations,
        categories: [10, 15, 20].map((id) => ({ id, name: `cat${id}` })),
      },
      null,
      2,
    ),
  );
  return { root, imageDir, annotationPath, objectsPerImage };
}
