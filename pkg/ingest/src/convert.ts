/** Study conversion: CT/PET series plus RTSTRUCT contours into the engine's
 * per-volume binary tensors and a manifest row. Failures are per-study; a
 * batch records them and keeps going. */

import * as path from "node:path";

import { matchRoi, readRtstructRois, readSeries, sliceZ } from "./dicom.js";
import { Point2, rasterizePolygon } from "./rasterize.js";
import { requireAxial, resamplePetToCtFrame } from "./resample.js";
import { writeTensor } from "./tensor.js";
import { ConversionError, ManifestRow, StudyDescriptor, Volume } from "./types.js";

function volumeToFlat(volume: Volume): { dims: number[]; data: Float32Array } {
  const d = volume.slices.length;
  const sliceLen = volume.rows * volume.cols;
  const data = new Float32Array(d * sliceLen);
  volume.slices.forEach((s, i) => data.set(s, i * sliceLen));
  return { dims: [d, volume.rows, volume.cols], data };
}

/** Rasterize the matched ROI's contours onto the CT grid, slice by slice.
 * Contours land on the CT slice nearest along the normal (within half the
 * slice gap); multiple contours on one slice are united. */
export function rasterizeRoiOnCt(
  contours: number[][],
  ct: Volume,
  warn: (msg: string) => void = () => {}
): Volume {
  requireAxial(ct.geoms[0], "CT series");
  const zs = ct.geoms.map(sliceZ);
  const gaps = zs.slice(1).map((z, i) => Math.abs(z - zs[i]));
  const halfGap = gaps.length > 0 ? Math.max(Math.min(...gaps) / 2, 1e-6) : Number.POSITIVE_INFINITY;
  const sliceLen = ct.rows * ct.cols;
  const slices = zs.map(() => new Float32Array(sliceLen));

  for (const flat of contours) {
    if (flat.length < 9 || flat.length % 3 !== 0) {
      continue; // fewer than three points: zero area by definition
    }
    const z = flat[2];
    let nearest = 0;
    for (let i = 1; i < zs.length; i++) {
      if (Math.abs(zs[i] - z) < Math.abs(zs[nearest] - z)) nearest = i;
    }
    if (Math.abs(zs[nearest] - z) > halfGap) {
      throw new ConversionError(
        `contour at z=${z} lies outside the CT slice range (nearest slice z=${zs[nearest]})`
      );
    }
    const geom = ct.geoms[nearest];
    const polygon: Point2[] = [];
    for (let i = 0; i < flat.length; i += 3) {
      polygon.push([
        (flat[i] - geom.origin[0]) / geom.colSpacing,
        (flat[i + 1] - geom.origin[1]) / geom.rowSpacing,
      ]);
    }
    const mask = rasterizePolygon(polygon, ct.rows, ct.cols, warn);
    const target = slices[nearest];
    for (let i = 0; i < sliceLen; i++) {
      if (mask[i]) target[i] = 1;
    }
  }
  return { slices, geoms: ct.geoms, rows: ct.rows, cols: ct.cols };
}

export function convertStudy(
  desc: StudyDescriptor,
  outDir: string,
  warn: (msg: string) => void = (msg) => console.warn(msg)
): ManifestRow {
  if (desc.label !== 0 && desc.label !== 1) {
    throw new ConversionError(`study ${desc.patientId} has no resolved 0/1 label`);
  }
  const ct = readSeries(desc.ctDir);
  const pet = readSeries(desc.petDir);
  const rois = readRtstructRois(desc.rtstructPath);
  const roi = matchRoi(rois, desc.roiPattern);

  const mask = rasterizeRoiOnCt(roi.contours, ct, warn);
  const maskArea = mask.slices.reduce((acc, s) => acc + s.reduce((a, v) => a + v, 0), 0);
  if (maskArea === 0) {
    throw new ConversionError(`ROI "${roi.name}" rasterizes to an empty mask`);
  }
  const petInCtFrame = resamplePetToCtFrame(pet, ct);

  const rel = {
    ct: path.join("images", `${desc.patientId}_ct.tnsr`),
    pet: path.join("images", `${desc.patientId}_pet.tnsr`),
    mask: path.join("images", `${desc.patientId}_mask.tnsr`),
  };
  for (const [vol, relPath] of [
    [ct, rel.ct],
    [petInCtFrame, rel.pet],
    [mask, rel.mask],
  ] as const) {
    const { dims, data } = volumeToFlat(vol);
    writeTensor(path.join(outDir, relPath), dims, data);
  }
  return {
    patientId: desc.patientId,
    institution: desc.institution,
    ctPath: rel.ct,
    petPath: rel.pet,
    maskPath: rel.mask,
    label: desc.label,
    split: desc.split ?? "train",
  };
}

export interface BatchResult {
  rows: ManifestRow[];
  failures: { patientId: string; error: string }[];
}

export function convertBatch(
  studies: StudyDescriptor[],
  outDir: string,
  warn: (msg: string) => void = (msg) => console.warn(msg)
): BatchResult {
  const rows: ManifestRow[] = [];
  const failures: { patientId: string; error: string }[] = [];
  for (const desc of studies) {
    try {
      rows.push(convertStudy(desc, outDir, warn));
    } catch (err) {
      failures.push({ patientId: desc.patientId, error: err instanceof Error ? err.message : String(err) });
    }
  }
  return { rows, failures };
}
