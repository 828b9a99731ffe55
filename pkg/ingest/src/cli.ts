#!/usr/bin/env node
/** Batch converter CLI: a JSON descriptor file in, manifest + tensors out.
 *
 * Usage:
 *   onconet-ingest convert --studies studies.json --out outdir
 *
 * The descriptor file lists studies (ctDir, petDir, rtstructPath, roiPattern,
 * institution, optional split/label) and may name a clinical label table
 * (`labelTable: {path, column}`) keyed by patient_id. Per-study failures are
 * recorded in failures.csv and the batch continues.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { convertBatch } from "./convert.js";
import { readLabelTable, writeManifest } from "./manifest.js";
import { BatchDescriptor, StudyDescriptor } from "./types.js";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`bad arguments near "${argv[i]}"`);
    }
    out.set(argv[i].slice(2), argv[i + 1]);
  }
  return out;
}

export function main(argv: string[]): number {
  try {
    if (argv[0] !== "convert") {
      process.stderr.write("usage: onconet-ingest convert --studies <json> --out <dir>\n");
      return 2;
    }
    const args = parseArgs(argv.slice(1));
    const studiesPath = args.get("studies");
    const outDir = args.get("out");
    if (!studiesPath || !outDir) {
      process.stderr.write("usage: onconet-ingest convert --studies <json> --out <dir>\n");
      return 2;
    }
    const batch: BatchDescriptor = JSON.parse(fs.readFileSync(studiesPath, "utf-8"));
    const baseDir = path.dirname(path.resolve(studiesPath));
    const resolveFrom = (p: string) => (path.isAbsolute(p) ? p : path.join(baseDir, p));

    let labels: Map<string, number> | undefined;
    if (batch.labelTable) {
      labels = readLabelTable(resolveFrom(batch.labelTable.path), batch.labelTable.column);
    }
    const studies: StudyDescriptor[] = batch.studies.map((s) => ({
      ...s,
      ctDir: resolveFrom(s.ctDir),
      petDir: resolveFrom(s.petDir),
      rtstructPath: resolveFrom(s.rtstructPath),
      label: s.label ?? labels?.get(s.patientId),
    }));

    const { rows, failures } = convertBatch(studies, outDir);
    writeManifest(rows, path.join(outDir, "manifest.csv"));
    if (failures.length > 0) {
      const lines = ["patient_id,error", ...failures.map((f) => `${f.patientId},"${f.error.replace(/"/g, "'")}"`)];
      fs.writeFileSync(path.join(outDir, "failures.csv"), lines.join("\n") + "\n");
    }
    process.stdout.write(`converted ${rows.length}/${studies.length} studies to ${outDir}\n`);
    for (const f of failures) {
      process.stderr.write(`failed ${f.patientId}: ${f.error}\n`);
    }
    return rows.length > 0 ? 0 : 1;
  } catch (err) {
    process.stderr.write(`error: ${err instanceof Error ? err.message : String(err)}\n`);
    return 1;
  }
}

const isDirectRun = process.argv[1] && path.resolve(process.argv[1]) === new URL(import.meta.url).pathname;
if (isDirectRun) {
  process.exit(main(process.argv.slice(2)));
}
