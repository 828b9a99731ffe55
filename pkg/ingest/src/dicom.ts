/** DICOM reading: image series into float volumes with per-slice geometry,
 * and RTSTRUCT contour extraction. Explicit-VR little-endian series as
 * written by the synthetic builders and typical exports. */

import * as fs from "node:fs";
import * as path from "node:path";
import dcmjs from "dcmjs";

import { ConversionError, SliceGeometry, Volume } from "./types.js";

const { DicomMessage, DicomMetaDictionary } = dcmjs.data;

export function readNaturalized(filePath: string): any {
  const buf = fs.readFileSync(filePath);
  const arrayBuffer = buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength);
  const dict = DicomMessage.readFile(arrayBuffer);
  return DicomMetaDictionary.naturalizeDataset(dict.dict);
}

function asArray<T>(value: T | T[] | undefined): T[] {
  if (value === undefined || value === null) return [];
  return Array.isArray(value) ? value : [value];
}

function asNumbers(value: unknown): number[] {
  return asArray(value as any).map((v) => Number(v));
}

function sliceGeometry(ds: any): SliceGeometry {
  const pos = asNumbers(ds.ImagePositionPatient);
  const orient = asNumbers(ds.ImageOrientationPatient);
  const spacing = asNumbers(ds.PixelSpacing);
  if (pos.length !== 3 || orient.length !== 6 || spacing.length !== 2) {
    throw new ConversionError(
      `missing geometry tags (position ${pos.length}/3, orientation ${orient.length}/6, spacing ${spacing.length}/2)`
    );
  }
  return {
    rows: Number(ds.Rows),
    cols: Number(ds.Columns),
    origin: [pos[0], pos[1], pos[2]],
    rowSpacing: spacing[0],
    colSpacing: spacing[1],
    orientation: orient,
  };
}

function decodePixels(ds: any): Float32Array {
  const rows = Number(ds.Rows);
  const cols = Number(ds.Columns);
  const bits = Number(ds.BitsAllocated ?? 16);
  const signed = Number(ds.PixelRepresentation ?? 0) === 1;
  const slope = Number(ds.RescaleSlope ?? 1);
  const intercept = Number(ds.RescaleIntercept ?? 0);
  const pixelData = asArray(ds.PixelData)[0];
  if (!(pixelData instanceof ArrayBuffer)) {
    throw new ConversionError("PixelData is missing or not decodable");
  }
  let raw: Int16Array | Uint16Array | Uint8Array | Int8Array;
  if (bits === 16) {
    raw = signed ? new Int16Array(pixelData, 0, rows * cols) : new Uint16Array(pixelData, 0, rows * cols);
  } else if (bits === 8) {
    raw = signed ? new Int8Array(pixelData, 0, rows * cols) : new Uint8Array(pixelData, 0, rows * cols);
  } else {
    throw new ConversionError(`unsupported BitsAllocated ${bits}`);
  }
  const out = new Float32Array(rows * cols);
  for (let i = 0; i < out.length; i++) {
    out[i] = raw[i] * slope + intercept;
  }
  return out;
}

function normalOf(orientation: number[]): [number, number, number] {
  const [rx, ry, rz, cx, cy, cz] = orientation;
  return [ry * cz - rz * cy, rz * cx - rx * cz, rx * cy - ry * cx];
}

export function sliceZ(geom: SliceGeometry): number {
  const n = normalOf(geom.orientation);
  return geom.origin[0] * n[0] + geom.origin[1] * n[1] + geom.origin[2] * n[2];
}

function closeEnough(a: number[], b: number[], tol = 1e-4): boolean {
  return a.length === b.length && a.every((v, i) => Math.abs(v - b[i]) <= tol);
}

/** Read every .dcm file in a directory as one image series, sorted along the
 * slice normal. Geometry must be consistent across slices. */
export function readSeries(dir: string): Volume {
  const files = fs
    .readdirSync(dir)
    .filter((f) => f.toLowerCase().endsWith(".dcm"))
    .sort()
    .map((f) => path.join(dir, f));
  if (files.length === 0) {
    throw new ConversionError(`no .dcm files in ${dir}`);
  }
  const slices: { geom: SliceGeometry; data: Float32Array }[] = files.map((f) => {
    const ds = readNaturalized(f);
    return { geom: sliceGeometry(ds), data: decodePixels(ds) };
  });
  const first = slices[0].geom;
  for (const { geom } of slices.slice(1)) {
    const consistent =
      geom.rows === first.rows &&
      geom.cols === first.cols &&
      Math.abs(geom.rowSpacing - first.rowSpacing) <= 1e-4 &&
      Math.abs(geom.colSpacing - first.colSpacing) <= 1e-4 &&
      closeEnough(geom.orientation, first.orientation);
    if (!consistent) {
      throw new ConversionError(`inconsistent slice geometry within series ${dir}`);
    }
  }
  slices.sort((a, b) => sliceZ(a.geom) - sliceZ(b.geom));
  return {
    slices: slices.map((s) => s.data),
    geoms: slices.map((s) => s.geom),
    rows: first.rows,
    cols: first.cols,
  };
}

export interface RoiContours {
  name: string;
  number: number;
  /** Closed planar contours as flat [x, y, z, ...] patient coordinates (mm). */
  contours: number[][];
}

export function readRtstructRois(filePath: string): RoiContours[] {
  const ds = readNaturalized(filePath);
  const names = new Map<number, string>();
  for (const item of asArray<any>(ds.StructureSetROISequence)) {
    names.set(Number(item.ROINumber), String(item.ROIName ?? ""));
  }
  const out: RoiContours[] = [];
  for (const roi of asArray<any>(ds.ROIContourSequence)) {
    const num = Number(roi.ReferencedROINumber);
    const contours = asArray<any>(roi.ContourSequence).map((c) => asNumbers(c.ContourData));
    out.push({ name: names.get(num) ?? `roi-${num}`, number: num, contours });
  }
  return out;
}

/** The descriptor's pattern must select exactly one ROI. */
export function matchRoi(rois: RoiContours[], pattern: string): RoiContours {
  const re = new RegExp(pattern, "i");
  const hits = rois.filter((r) => re.test(r.name));
  if (hits.length === 0) {
    throw new ConversionError(
      `no ROI matches pattern "${pattern}" (available: ${rois.map((r) => r.name).join(", ") || "none"})`
    );
  }
  if (hits.length > 1) {
    throw new ConversionError(
      `pattern "${pattern}" matches ${hits.length} ROIs: ${hits.map((r) => r.name).join(", ")}`
    );
  }
  return hits[0];
}
