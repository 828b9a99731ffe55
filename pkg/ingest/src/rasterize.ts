/** Polygon-to-mask rasterization: even-odd fill evaluated at pixel centers. */

export type Point2 = [number, number];

/** Even-odd scanline fill. Polygon vertices are in pixel coordinates where
 * the center of pixel (row r, column c) sits at (c, r). A pixel is inside
 * when a ray cast toward +x from its center crosses the boundary an odd
 * number of times. Self-intersecting input keeps even-odd semantics but
 * earns a warning. */
export function rasterizePolygon(
  polygon: Point2[],
  rows: number,
  cols: number,
  warn: (msg: string) => void = (msg) => console.warn(msg)
): Uint8Array {
  const mask = new Uint8Array(rows * cols);
  if (polygon.length < 3) {
    return mask; // degenerate: zero area, nothing to fill
  }
  if (selfIntersects(polygon)) {
    warn("self-intersecting contour; applying even-odd fill semantics");
  }
  const n = polygon.length;
  for (let r = 0; r < rows; r++) {
    const xs: number[] = [];
    for (let i = 0; i < n; i++) {
      const [x1, y1] = polygon[i];
      const [x2, y2] = polygon[(i + 1) % n];
      if (y1 <= r !== y2 <= r) {
        xs.push(x1 + ((r - y1) * (x2 - x1)) / (y2 - y1));
      }
    }
    xs.sort((a, b) => a - b);
    for (let k = 0; k + 1 < xs.length; k += 2) {
      const start = Math.max(0, Math.ceil(xs[k]));
      const stop = Math.min(cols - 1, Math.ceil(xs[k + 1]) - 1);
      for (let c = start; c <= stop; c++) {
        mask[r * cols + c] = 1;
      }
    }
  }
  return mask;
}

function segmentsIntersect(a: Point2, b: Point2, c: Point2, d: Point2): boolean {
  const cross = (o: Point2, p: Point2, q: Point2) =>
    (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0]);
  const d1 = cross(c, d, a);
  const d2 = cross(c, d, b);
  const d3 = cross(a, b, c);
  const d4 = cross(a, b, d);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

export function selfIntersects(polygon: Point2[]): boolean {
  const n = polygon.length;
  for (let i = 0; i < n; i++) {
    for (let j = i + 1; j < n; j++) {
      // skip adjacent edges (they share a vertex)
      if (j === i || (j + 1) % n === i || (i + 1) % n === j) continue;
      if (
        segmentsIntersect(
          polygon[i],
          polygon[(i + 1) % n],
          polygon[j],
          polygon[(j + 1) % n]
        )
      ) {
        return true;
      }
    }
  }
  return false;
}
