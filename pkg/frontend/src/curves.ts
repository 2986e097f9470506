/** Helpers for the belief-curve explorer (all data comes from the service). */

import { ClassCode, CurveRow } from "./api.js";

export const CLASS_CODES: ClassCode[] = ["h", "m", "M"];

/** Row whose delta is closest to the slider position. */
export function nearestRow(rows: CurveRow[], delta: number): CurveRow {
  if (rows.length === 0) {
    throw new Error("empty curve table");
  }
  let best = rows[0]!;
  for (const row of rows) {
    if (Math.abs(row.delta - delta) < Math.abs(best.delta - delta)) {
      best = row;
    }
  }
  return best;
}

export function argmaxOf(row: CurveRow): ClassCode {
  let winner: ClassCode = "h";
  for (const code of CLASS_CODES) {
    if (row[code] > row[winner]) {
      winner = code;
    }
  }
  return winner;
}

export interface ArgmaxRegion {
  from: number;
  to: number;
  winner: ClassCode;
}

/** Contiguous stretches of the delta axis won by one class. */
export function argmaxRegions(rows: CurveRow[]): ArgmaxRegion[] {
  const regions: ArgmaxRegion[] = [];
  for (const row of rows) {
    const winner = argmaxOf(row);
    const last = regions[regions.length - 1];
    if (last !== undefined && last.winner === winner) {
      last.to = row.delta;
    } else {
      regions.push({ from: row.delta, to: row.delta, winner });
    }
  }
  return regions;
}

/** SVG polyline points for one curve, mapped into a width x height box. */
export function polylinePoints(
  rows: CurveRow[],
  code: ClassCode,
  width: number,
  height: number,
  maxDelta: number,
): string {
  return rows
    .map((row) => {
      const x = (row.delta / maxDelta) * width;
      const y = height - row[code] * height;
      return `${x.toFixed(2)},${y.toFixed(2)}`;
    })
    .join(" ");
}
