/** Shared types for the DICOM-to-engine converter. */

export interface StudyDescriptor {
  patientId: string;
  /** Directory holding the CT series (.dcm slices). */
  ctDir: string;
  /** Directory holding the PET series (.dcm slices). */
  petDir: string;
  /** Path to the RTSTRUCT file carrying the tumor contours. */
  rtstructPath: string;
  /** Case-insensitive pattern that must match exactly one ROI name. */
  roiPattern: string;
  institution: string;
  /** Outcome label: 0 survival, 1 death. Resolved from the clinical table when absent. */
  label?: number;
  split?: string;
}

export interface BatchDescriptor {
  /** Optional clinical table supplying labels by patient id. */
  labelTable?: { path: string; column: string };
  studies: StudyDescriptor[];
}

export interface SliceGeometry {
  rows: number;
  cols: number;
  /** ImagePositionPatient: patient-space center of the first (top-left) voxel. */
  origin: [number, number, number];
  /** PixelSpacing given row-spacing first, then column-spacing (mm). */
  rowSpacing: number;
  colSpacing: number;
  /** ImageOrientationPatient: row direction cosines then column direction cosines. */
  orientation: number[];
}

export interface Volume {
  /** One Float32Array of rows*cols values per slice, sorted along the normal. */
  slices: Float32Array[];
  geoms: SliceGeometry[];
  rows: number;
  cols: number;
}

export interface ManifestRow {
  patientId: string;
  institution: string;
  ctPath: string;
  petPath: string;
  maskPath: string;
  label: number;
  split: string;
}

export class ConversionError extends Error {}
