/** Manifest CSV writing in the engine's exact schema. */

import * as fs from "node:fs";
import * as path from "node:path";

import { ManifestRow } from "./types.js";

export const MANIFEST_HEADER = "patient_id,institution,ct_path,pet_path,mask_path,label,split";

export function manifestCsv(rows: ManifestRow[]): string {
  const lines = [MANIFEST_HEADER];
  for (const r of rows) {
    lines.push(
      [r.patientId, r.institution, r.ctPath, r.petPath, r.maskPath, String(r.label), r.split].join(",")
    );
  }
  return lines.join("\r\n") + "\r\n";
}

export function writeManifest(rows: ManifestRow[], filePath: string): void {
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  fs.writeFileSync(filePath, manifestCsv(rows));
}

/** Clinical table lookup: CSV with a patient_id column plus the label column. */
export function readLabelTable(filePath: string, column: string): Map<string, number> {
  const text = fs.readFileSync(filePath, "utf-8");
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0);
  if (lines.length === 0) {
    throw new Error(`empty label table ${filePath}`);
  }
  const header = lines[0].split(",").map((h) => h.trim());
  const idIdx = header.indexOf("patient_id");
  const labelIdx = header.indexOf(column);
  if (idIdx < 0 || labelIdx < 0) {
    throw new Error(`label table needs columns patient_id and ${column}, found: ${header.join(",")}`);
  }
  const out = new Map<string, number>();
  for (const line of lines.slice(1)) {
    const cells = line.split(",");
    const label = Number(cells[labelIdx]);
    if (label !== 0 && label !== 1) {
      throw new Error(`label for ${cells[idIdx]} must be 0 or 1, got ${cells[labelIdx]}`);
    }
    out.set(cells[idIdx].trim(), label);
  }
  return out;
}
