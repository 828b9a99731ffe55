import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { StudyDescriptor } from "../src/types";
import { writeSyntheticStudy } from "./synthetic";

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "ingest-cli-"));
const cliPath = path.join(__dirname, "..", "dist", "cli.js");
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));

function runCli(args: string[]) {
  return spawnSync("node", [cliPath, ...args], { encoding: "utf-8", timeout: 60_000 });
}

describe("onconet-ingest CLI", () => {
  beforeAll(() => {
    // compiled output must exist: the CLI test drives the built artifact
    expect(fs.existsSync(cliPath)).toBe(true);
    const studies: Omit<StudyDescriptor, "label">[] = [];
    for (const [i, pid] of ["cli001", "cli002"].entries()) {
      const paths = writeSyntheticStudy({
        dir: path.join(tmp, pid),
        uidBase: `1.2.840.97.${i + 1}`,
        ctSize: 32,
        petSize: 8,
        squarePx: [9.5, 19.5],
      });
      studies.push({
        patientId: pid,
        ctDir: path.relative(tmp, paths.ctDir),
        petDir: path.relative(tmp, paths.petDir),
        rtstructPath: path.relative(tmp, paths.rtstructPath),
        roiPattern: "gtv",
        institution: "site02",
      });
    }
    fs.writeFileSync(
      path.join(tmp, "studies.json"),
      JSON.stringify({ labelTable: { path: "labels.csv", column: "os_event" }, studies }, null, 2)
    );
    fs.writeFileSync(path.join(tmp, "labels.csv"), "patient_id,os_event\ncli001,0\ncli002,1\n");
  });

  it("converts a batch described by studies.json + label table", () => {
    const out = path.join(tmp, "out");
    const res = runCli(["convert", "--studies", path.join(tmp, "studies.json"), "--out", out]);
    expect(res.stderr).toBe("");
    expect(res.status).toBe(0);
    expect(res.stdout).toContain("converted 2/2");
    const manifest = fs.readFileSync(path.join(out, "manifest.csv"), "utf-8");
    expect(manifest.split(/\r?\n/)[0]).toBe(
      "patient_id,institution,ct_path,pet_path,mask_path,label,split"
    );
    expect(manifest).toContain("cli001");
    expect(manifest).toContain(",1,train");
  });

  it("records failures and continues", () => {
    const broken = JSON.parse(fs.readFileSync(path.join(tmp, "studies.json"), "utf-8"));
    broken.studies[0].roiPattern = "missing-roi";
    fs.writeFileSync(path.join(tmp, "studies-broken.json"), JSON.stringify(broken));
    const out = path.join(tmp, "out-broken");
    const res = runCli(["convert", "--studies", path.join(tmp, "studies-broken.json"), "--out", out]);
    expect(res.status).toBe(0); // one study still converted
    expect(res.stdout).toContain("converted 1/2");
    expect(res.stderr).toContain("cli001");
    expect(fs.readFileSync(path.join(out, "failures.csv"), "utf-8")).toContain("no ROI matches");
  });

  it("exits 2 on usage errors", () => {
    const res = runCli(["convert"]);
    expect(res.status).toBe(2);
    expect(res.stderr).toContain("usage");
  });
});
