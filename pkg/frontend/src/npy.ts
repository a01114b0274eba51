/**
 * Minimal NPY v1.0 writer/reader for float32 little-endian C-order tensors.
 *
 * Matches the consumer's container contract: header dict padded with spaces
 * so magic + version + length field + header total a multiple of 16 bytes.
 */

import { Buffer } from "node:buffer";
import * as fs from "node:fs";
import * as os from "node:os";

const MAGIC = Buffer.from("\x93NUMPY", "latin1");

export interface Tensor {
  shape: number[];
  data: Float32Array;
}

function shapeRepr(shape: number[]): string {
  if (shape.length === 1) return `(${shape[0]},)`;
  return `(${shape.join(", ")})`;
}

export function writeNpy(path: string, tensor: Tensor): void {
  const count = tensor.shape.reduce((a, b) => a * b, 1);
  if (count !== tensor.data.length) {
    throw new Error(`shape ${tensor.shape} does not match ${tensor.data.length} values`);
  }
  if (tensor.shape.length < 2 || tensor.shape.length > 3) {
    throw new Error(`tensor must have 2 or 3 dims, got ${tensor.shape.length}`);
  }
  for (const value of tensor.data) {
    if (!Number.isFinite(value)) throw new Error("tensor contains NaN or Inf");
  }

  const dict = `{'descr': '<f4', 'fortran_order': False, 'shape': ${shapeRepr(tensor.shape)}, }`;
  const unpadded = 10 + dict.length + 1;
  const pad = (16 - (unpadded % 16)) % 16;
  const header = Buffer.from(dict + " ".repeat(pad) + "\n", "latin1");

  const lenField = Buffer.alloc(2);
  lenField.writeUInt16LE(header.length, 0);

  let payload: Buffer;
  if (os.endianness() === "LE") {
    payload = Buffer.from(tensor.data.buffer, tensor.data.byteOffset, count * 4);
  } else {
    payload = Buffer.alloc(count * 4);
    for (let i = 0; i < count; i++) payload.writeFloatLE(tensor.data[i], i * 4);
  }
  fs.writeFileSync(
    path,
    Buffer.concat([MAGIC, Buffer.from([1, 0]), lenField, header, payload]),
  );
}

export function readNpy(path: string): Tensor {
  const raw = fs.readFileSync(path);
  if (!raw.subarray(0, 6).equals(MAGIC)) throw new Error(`${path}: bad NPY magic`);
  if (raw[6] !== 1 || raw[7] !== 0) throw new Error(`${path}: unsupported NPY version`);
  const headerLen = raw.readUInt16LE(8);
  const header = raw.subarray(10, 10 + headerLen).toString("latin1");
  if (!header.includes("'<f4'") || !header.includes("'fortran_order': False")) {
    throw new Error(`${path}: unsupported dtype or order`);
  }
  const match = header.match(/'shape':\s*\(([^)]*)\)/);
  if (!match) throw new Error(`${path}: unparseable shape`);
  const shape = match[1]
    .split(",")
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map((s) => Number.parseInt(s, 10));
  const count = shape.reduce((a, b) => a * b, 1);
  const payload = raw.subarray(10 + headerLen);
  if (payload.length !== count * 4) throw new Error(`${path}: truncated payload`);
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) data[i] = payload.readFloatLE(i * 4);
  return { shape, data };
}
