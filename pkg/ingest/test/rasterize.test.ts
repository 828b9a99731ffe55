import { describe, expect, it, vi } from "vitest";

import { rasterizePolygon, selfIntersects, Point2 } from "../src/rasterize";

function shoelaceArea(poly: Point2[]): number {
  let acc = 0;
  for (let i = 0; i < poly.length; i++) {
    const [x1, y1] = poly[i];
    const [x2, y2] = poly[(i + 1) % poly.length];
    acc += x1 * y2 - x2 * y1;
  }
  return Math.abs(acc) / 2;
}

// deterministic LCG so the convex-polygon cases are reproducible
function lcg(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (s * 1664525 + 1013904223) >>> 0;
    return s / 2 ** 32;
  };
}

describe("rasterizePolygon", () => {
  it("fills the whole grid for a square spanning it", () => {
    const poly: Point2[] = [
      [-0.5, -0.5],
      [1.5, -0.5],
      [1.5, 1.5],
      [-0.5, 1.5],
    ];
    const mask = rasterizePolygon(poly, 2, 2);
    expect(Array.from(mask)).toEqual([1, 1, 1, 1]);
  });

  it("returns all zeros for a degenerate zero-area polygon", () => {
    const collinear: Point2[] = [
      [1, 1],
      [3, 3],
      [5, 5],
    ];
    expect(Array.from(rasterizePolygon(collinear, 8, 8)).every((v) => v === 0)).toBe(true);
    const twoPoints: Point2[] = [
      [1, 1],
      [3, 3],
    ];
    expect(Array.from(rasterizePolygon(twoPoints, 8, 8)).every((v) => v === 0)).toBe(true);
  });

  it("matches the shoelace area within 2% for random convex polygons at 512^2", () => {
    const rand = lcg(7);
    for (let trial = 0; trial < 5; trial++) {
      const cx = 256 + (rand() - 0.5) * 100;
      const cy = 256 + (rand() - 0.5) * 100;
      const nVerts = 8 + Math.floor(rand() * 8);
      const radius = 80 + rand() * 120;
      const poly: Point2[] = [];
      for (let k = 0; k < nVerts; k++) {
        const angle = (2 * Math.PI * k) / nVerts;
        const r = radius * (0.7 + 0.3 * rand());
        poly.push([cx + r * Math.cos(angle), cy + r * Math.sin(angle)]);
      }
      const mask = rasterizePolygon(poly, 512, 512);
      const count = mask.reduce((a, v) => a + v, 0);
      const analytic = shoelaceArea(poly);
      expect(Math.abs(count - analytic) / analytic).toBeLessThan(0.02);
    }
  });

  it("warns on self-intersecting input and keeps even-odd semantics", () => {
    const bowtie: Point2[] = [
      [0, 0],
      [10, 10],
      [10, 0],
      [0, 10],
    ];
    expect(selfIntersects(bowtie)).toBe(true);
    const warn = vi.fn();
    const mask = rasterizePolygon(bowtie, 11, 11, warn);
    expect(warn).toHaveBeenCalledOnce();
    // the crossing point (5,5) is on the boundary between the two lobes
    const count = mask.reduce((a, v) => a + v, 0);
    expect(count).toBeGreaterThan(0);
    expect(count).toBeLessThan(100); // far less than the convex hull's area
  });

  it("does not flag a plain convex polygon as self-intersecting", () => {
    const square: Point2[] = [
      [0, 0],
      [4, 0],
      [4, 4],
      [0, 4],
    ];
    expect(selfIntersects(square)).toBe(false);
  });
});
