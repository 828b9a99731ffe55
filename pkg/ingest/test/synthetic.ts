/** Deterministic synthetic DICOM studies for the converter tests: CT and PET
 * slices plus an RTSTRUCT with configurable planar contours. */

import * as fs from "node:fs";
import * as path from "node:path";
import dcmjs from "dcmjs";

const { DicomDict, DicomMetaDictionary } = dcmjs.data;

const TRANSFER_SYNTAX = "1.2.840.10008.1.2.1"; // explicit VR little endian
const CT_SOP_CLASS = "1.2.840.10008.5.1.4.1.1.2";
const PT_SOP_CLASS = "1.2.840.10008.5.1.4.1.1.128";
const RTSTRUCT_SOP_CLASS = "1.2.840.10008.5.1.4.1.1.481.3";

function writePart10(filePath: string, dataset: Record<string, unknown>, sopClass: string, sopInstance: string): void {
  const meta = {
    "00020001": { vr: "OB", Value: [new Uint8Array([0, 1]).buffer] },
    "00020002": { vr: "UI", Value: [sopClass] },
    "00020003": { vr: "UI", Value: [sopInstance] },
    "00020010": { vr: "UI", Value: [TRANSFER_SYNTAX] },
    "00020012": { vr: "UI", Value: ["1.2.826.0.1.3680043.8.498"] },
  };
  const dict = new DicomDict(meta);
  dict.dict = DicomMetaDictionary.denaturalizeDataset(dataset);
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  fs.writeFileSync(filePath, Buffer.from(dict.write()));
}

export interface SliceSpec {
  rows: number;
  cols: number;
  /** ImagePositionPatient of the slice (x, y, z) in mm. */
  origin: [number, number, number];
  /** [rowSpacing, colSpacing] in mm. */
  spacing: [number, number];
  pixels: Uint16Array;
  rescaleSlope?: number;
  rescaleIntercept?: number;
  orientation?: number[];
}

export function writeImageSlice(
  filePath: string,
  modality: "CT" | "PT",
  uidBase: string,
  instanceNumber: number,
  spec: SliceSpec
): void {
  const sopClass = modality === "CT" ? CT_SOP_CLASS : PT_SOP_CLASS;
  const sopInstance = `${uidBase}.${instanceNumber}`;
  const dataset: Record<string, unknown> = {
    SOPClassUID: sopClass,
    SOPInstanceUID: sopInstance,
    Modality: modality,
    PatientID: "synthetic",
    PatientName: "synthetic",
    StudyInstanceUID: `${uidBase}.study`,
    SeriesInstanceUID: `${uidBase}.series`,
    FrameOfReferenceUID: `${uidBase}.frame`,
    InstanceNumber: String(instanceNumber),
    Rows: spec.rows,
    Columns: spec.cols,
    BitsAllocated: 16,
    BitsStored: 16,
    HighBit: 15,
    PixelRepresentation: 0,
    SamplesPerPixel: 1,
    PhotometricInterpretation: "MONOCHROME2",
    ImagePositionPatient: spec.origin,
    ImageOrientationPatient: spec.orientation ?? [1, 0, 0, 0, 1, 0],
    PixelSpacing: spec.spacing,
    RescaleSlope: spec.rescaleSlope ?? 1,
    RescaleIntercept: spec.rescaleIntercept ?? 0,
    PixelData: spec.pixels.buffer.slice(
      spec.pixels.byteOffset,
      spec.pixels.byteOffset + spec.pixels.byteLength
    ),
    _vrMap: { PixelData: "OW" },
  };
  writePart10(filePath, dataset, sopClass, sopInstance);
}

export interface RtstructSpec {
  /** ROI name -> list of closed planar contours (flat x,y,z mm triplets). */
  rois: Record<string, number[][]>;
}

export function writeRtstruct(filePath: string, uidBase: string, spec: RtstructSpec): void {
  const sopInstance = `${uidBase}.rtstruct`;
  const names = Object.keys(spec.rois);
  const dataset: Record<string, unknown> = {
    SOPClassUID: RTSTRUCT_SOP_CLASS,
    SOPInstanceUID: sopInstance,
    Modality: "RTSTRUCT",
    PatientID: "synthetic",
    PatientName: "synthetic",
    StudyInstanceUID: `${uidBase}.study`,
    SeriesInstanceUID: `${uidBase}.rtseries`,
    StructureSetLabel: "synthetic",
    StructureSetROISequence: names.map((name, i) => ({
      ROINumber: String(i + 1),
      ReferencedFrameOfReferenceUID: `${uidBase}.frame`,
      ROIName: name,
      ROIGenerationAlgorithm: "MANUAL",
    })),
    ROIContourSequence: names.map((name, i) => ({
      ReferencedROINumber: String(i + 1),
      ROIDisplayColor: "255\\0\\0",
      ContourSequence: spec.rois[name].map((points) => ({
        ContourGeometricType: "CLOSED_PLANAR",
        NumberOfContourPoints: String(points.length / 3),
        ContourData: points.map((p) => String(p)),
      })),
    })),
  };
  writePart10(filePath, dataset, RTSTRUCT_SOP_CLASS, sopInstance);
}

export interface SyntheticStudyOptions {
  dir: string;
  uidBase: string;
  ctSize?: number;
  petSize?: number;
  nSlices?: number;
  /** Square tumor contour in pixel units, [min, max] applied to both axes. */
  squarePx?: [number, number];
  roiName?: string;
  extraRois?: Record<string, number[][]>;
  brightTumor?: boolean;
}

export interface SyntheticStudyPaths {
  ctDir: string;
  petDir: string;
  rtstructPath: string;
  /** Analytic contour area in mm^2 (equals pixel count at 1 mm spacing). */
  contourAreaMm2: number;
}

/** One axial study: CT at 1 mm spacing with origin (0, 0, z), PET covering
 * the same field of view at 1/4 resolution, and an RTSTRUCT square contour. */
export function writeSyntheticStudy(opts: SyntheticStudyOptions): SyntheticStudyPaths {
  const size = opts.ctSize ?? 64;
  const petSize = opts.petSize ?? Math.max(Math.floor(size / 4), 4);
  const nSlices = opts.nSlices ?? 1;
  const [lo, hi] = opts.squarePx ?? [9.5, 29.5];
  const roiName = opts.roiName ?? "GTV-1";

  const ctDir = path.join(opts.dir, "ct");
  const petDir = path.join(opts.dir, "pt");
  const rtstructPath = path.join(opts.dir, "rtstruct.dcm");

  const cx = (lo + hi) / 2;
  for (let s = 0; s < nSlices; s++) {
    const z = 10 + 3 * s;
    const ctPixels = new Uint16Array(size * size);
    for (let r = 0; r < size; r++) {
      for (let c = 0; c < size; c++) {
        let v = 100 + ((r * 7 + c * 3) % 50);
        const inside = r > lo && r < hi && c > lo && c < hi;
        if (opts.brightTumor !== false && inside) v += 600;
        ctPixels[r * size + c] = v;
      }
    }
    writeImageSlice(path.join(ctDir, `ct${String(s).padStart(3, "0")}.dcm`), "CT", `${opts.uidBase}.1`, s + 1, {
      rows: size,
      cols: size,
      origin: [0, 0, z],
      spacing: [1, 1],
      pixels: ctPixels,
      rescaleSlope: 1,
      rescaleIntercept: -100,
    });

    // PET grid covering the same FOV: spacing scaled, origin shifted so the
    // pixel-grid edges coincide with the CT's.
    const petSpacing = size / petSize;
    const petOrigin = -0.5 + petSpacing / 2;
    const petPixels = new Uint16Array(petSize * petSize);
    for (let r = 0; r < petSize; r++) {
      for (let c = 0; c < petSize; c++) {
        const y = petOrigin + r * petSpacing;
        const x = petOrigin + c * petSpacing;
        const d2 = (y - cx) ** 2 + (x - cx) ** 2;
        petPixels[r * petSize + c] = Math.round(1000 * Math.exp(-d2 / (2 * (hi - lo) ** 2)));
      }
    }
    writeImageSlice(path.join(petDir, `pt${String(s).padStart(3, "0")}.dcm`), "PT", `${opts.uidBase}.2`, s + 1, {
      rows: petSize,
      cols: petSize,
      origin: [petOrigin, petOrigin, z],
      spacing: [petSpacing, petSpacing],
      pixels: petPixels,
    });
  }

  // square contour on the middle slice, in mm (spacing 1, origin 0 -> pixel units)
  const zMid = 10 + 3 * Math.floor(nSlices / 2);
  const square = [lo, lo, zMid, hi, lo, zMid, hi, hi, zMid, lo, hi, zMid];
  const rois: Record<string, number[][]> = { [roiName]: [square], ...(opts.extraRois ?? {}) };
  writeRtstruct(rtstructPath, `${opts.uidBase}.3`, { rois });

  return {
    ctDir,
    petDir,
    rtstructPath,
    contourAreaMm2: (hi - lo) * (hi - lo),
  };
}
