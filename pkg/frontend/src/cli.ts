/**
 * xferod-export: dump a toy detector pyramid + annotations as an xferod
 * tensor container.
 *
 *   xferod-export --model toy-r50 --images ./imgs --annotations coco.json \
 *                 --levels 2,3,4,5 --include-fc --out ./container
 */

import * as process from "node:process";

import { exportContainer } from "./exporter.js";

function parseArgs(argv: string[]): Map<string, string | boolean> {
  const out = new Map<string, string | boolean>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) throw new Error(`unexpected argument ${arg}`);
    const key = arg.slice(2);
    if (key === "include-fc") {
      out.set(key, true);
    } else {
      const value = argv[++i];
      if (value === undefined) throw new Error(`--${key} needs a value`);
      out.set(key, value);
    }
  }
  return out;
}

export function main(argv: string[]): number {
  let args: Map<string, string | boolean>;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
  const required = ["model", "images", "annotations", "out"];
  for (const key of required) {
    if (!args.has(key)) {
      console.error(`error: --${key} is required`);
      return 2;
    }
  }
  try {
    const report = exportContainer({
      model: args.get("model") as string,
      imageDir: args.get("images") as string,
      annotations: args.get("annotations") as string,
      levels: ((args.get("levels") as string) ?? "2,3,4,5").split(",").map((s) => s.trim()),
      includeFc: args.get("include-fc") === true,
      outDir: args.get("out") as string,
    });
    for (const warning of report.warnings) console.warn(`warning: ${warning}`);
    console.log(
      `exported ${report.imageCount} images, ${report.objectCount} objects` +
        (report.droppedObjects > 0 ? ` (${report.droppedObjects} dropped)` : ""),
    );
    console.log(report.manifestPath);
    return 0;
  } catch (err) {
    console.error(`export failed: ${(err as Error).message}`);
    return 1;
  }
}

process.exit(main(process.argv.slice(2)));
