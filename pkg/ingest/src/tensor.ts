/** Binary tensor file format shared with the engine: magic "TNSR",
 * version u8=1, dtype u8=1 (float32), rank u8, dims as u32 little-endian,
 * then the raw little-endian float32 payload. */

import * as fs from "node:fs";
import * as path from "node:path";

const MAGIC = Buffer.from("TNSR", "ascii");
const VERSION = 1;
const DTYPE_F32 = 1;

export function encodeTensor(dims: number[], data: Float32Array): Buffer {
  const count = dims.reduce((a, b) => a * b, 1);
  if (count !== data.length) {
    throw new Error(`dims ${dims.join("x")} hold ${count} values, got ${data.length}`);
  }
  if (dims.length > 255) {
    throw new Error(`rank ${dims.length} exceeds the format limit of 255`);
  }
  const header = Buffer.alloc(4 + 3 + 4 * dims.length);
  MAGIC.copy(header, 0);
  header.writeUInt8(VERSION, 4);
  header.writeUInt8(DTYPE_F32, 5);
  header.writeUInt8(dims.length, 6);
  dims.forEach((d, i) => header.writeUInt32LE(d, 7 + 4 * i));
  const payload = Buffer.alloc(4 * data.length);
  for (let i = 0; i < data.length; i++) {
    payload.writeFloatLE(data[i], 4 * i);
  }
  return Buffer.concat([header, payload]);
}

export function writeTensor(filePath: string, dims: number[], data: Float32Array): void {
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  fs.writeFileSync(filePath, encodeTensor(dims, data));
}

export function readTensor(filePath: string): { dims: number[]; data: Float32Array } {
  const buf = fs.readFileSync(filePath);
  if (!buf.subarray(0, 4).equals(MAGIC)) {
    throw new Error(`bad tensor file magic in ${filePath}`);
  }
  if (buf.readUInt8(4) !== VERSION) {
    throw new Error(`unsupported tensor format version ${buf.readUInt8(4)}`);
  }
  if (buf.readUInt8(5) !== DTYPE_F32) {
    throw new Error(`unsupported dtype code ${buf.readUInt8(5)}`);
  }
  const rank = buf.readUInt8(6);
  const dims: number[] = [];
  for (let i = 0; i < rank; i++) {
    dims.push(buf.readUInt32LE(7 + 4 * i));
  }
  const count = dims.reduce((a, b) => a * b, 1);
  const start = 7 + 4 * rank;
  if (buf.length < start + 4 * count) {
    throw new Error(`truncated tensor payload in ${filePath}`);
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(start + 4 * i);
  }
  return { dims, data };
}
