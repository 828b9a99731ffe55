export { convertStudy, convertBatch, rasterizeRoiOnCt } from "./convert.js";
export { readSeries, readRtstructRois, matchRoi, readNaturalized } from "./dicom.js";
export { rasterizePolygon, selfIntersects } from "./rasterize.js";
export { resamplePetToCtFrame } from "./resample.js";
export { encodeTensor, writeTensor, readTensor } from "./tensor.js";
export { writeManifest, manifestCsv, readLabelTable, MANIFEST_HEADER } from "./manifest.js";
export type {
  StudyDescriptor,
  BatchDescriptor,
  SliceGeometry,
  Volume,
  ManifestRow,
} from "./types.js";
export { ConversionError } from "./types.js";
