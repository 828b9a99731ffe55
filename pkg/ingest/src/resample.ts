/** Header-driven PET resampling into the CT slice frame.
 *
 * Slices are matched by nearest position along the shared normal; in-plane,
 * each output slice keeps the PET's native pixel counts but covers exactly
 * the CT field of view, so the downstream engine only ever upscales in 2-d.
 * Axial, axis-aligned orientation is required for both series. */

import { ConversionError, SliceGeometry, Volume } from "./types.js";
import { sliceZ } from "./dicom.js";

const AXIAL = [1, 0, 0, 0, 1, 0];

export function requireAxial(geom: SliceGeometry, what: string): void {
  const ok = geom.orientation.every((v, i) => Math.abs(v - AXIAL[i]) <= 1e-4);
  if (!ok) {
    throw new ConversionError(
      `${what} is not axial axis-aligned (orientation ${geom.orientation.join(",")})`
    );
  }
}

function bilinearSample(data: Float32Array, rows: number, cols: number, u: number, v: number): number {
  // u: fractional column index, v: fractional row index; clamped at borders
  const uc = Math.min(Math.max(u, 0), cols - 1);
  const vc = Math.min(Math.max(v, 0), rows - 1);
  const c0 = Math.floor(uc);
  const r0 = Math.floor(vc);
  const c1 = Math.min(c0 + 1, cols - 1);
  const r1 = Math.min(r0 + 1, rows - 1);
  const tu = uc - c0;
  const tv = vc - r0;
  const a = data[r0 * cols + c0];
  const b = data[r0 * cols + c1];
  const c = data[r1 * cols + c0];
  const d = data[r1 * cols + c1];
  return (1 - tv) * ((1 - tu) * a + tu * b) + tv * ((1 - tu) * c + tu * d);
}

export function resamplePetToCtFrame(pet: Volume, ct: Volume): Volume {
  requireAxial(ct.geoms[0], "CT series");
  requireAxial(pet.geoms[0], "PET series");
  const petZ = pet.geoms.map(sliceZ);
  const outSlices: Float32Array[] = [];
  const outGeoms: SliceGeometry[] = [];
  for (let i = 0; i < ct.slices.length; i++) {
    const ctGeom = ct.geoms[i];
    const z = sliceZ(ctGeom);
    let nearest = 0;
    for (let j = 1; j < petZ.length; j++) {
      if (Math.abs(petZ[j] - z) < Math.abs(petZ[nearest] - z)) nearest = j;
    }
    const petGeom = pet.geoms[nearest];
    const petSlice = pet.slices[nearest];

    const outRows = pet.rows;
    const outCols = pet.cols;
    // CT field of view (edges of the pixel grid, not center-to-center)
    const fovX0 = ctGeom.origin[0] - ctGeom.colSpacing / 2;
    const fovY0 = ctGeom.origin[1] - ctGeom.rowSpacing / 2;
    const cellW = (ct.cols * ctGeom.colSpacing) / outCols;
    const cellH = (ct.rows * ctGeom.rowSpacing) / outRows;
    const out = new Float32Array(outRows * outCols);
    for (let r = 0; r < outRows; r++) {
      const y = fovY0 + (r + 0.5) * cellH;
      const v = (y - petGeom.origin[1]) / petGeom.rowSpacing;
      for (let c = 0; c < outCols; c++) {
        const x = fovX0 + (c + 0.5) * cellW;
        const u = (x - petGeom.origin[0]) / petGeom.colSpacing;
        out[r * outCols + c] = bilinearSample(petSlice, pet.rows, pet.cols, u, v);
      }
    }
    outSlices.push(out);
    outGeoms.push({
      rows: outRows,
      cols: outCols,
      origin: [fovX0 + cellW / 2, fovY0 + cellH / 2, ctGeom.origin[2]],
      rowSpacing: cellH,
      colSpacing: cellW,
      orientation: ctGeom.orientation.slice(),
    });
  }
  return { slices: outSlices, geoms: outGeoms, rows: pet.rows, cols: pet.cols };
}
