/** Displacement colormap and ROI highlighting rules. */

// compact viridis-like ramp, dark blue -> teal -> yellow
const RAMP: [number, number, number][] = [
  [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
];

export interface ColormapRange {
  min: number;
  max: number;
}

/** Endpoints are the min and max of the frame's displacement magnitudes. */
export function colormapRange(magnitudes: number[]): ColormapRange {
  if (magnitudes.length === 0) return { min: 0, max: 0 };
  let min = magnitudes[0];
  let max = magnitudes[0];
  for (const m of magnitudes) {
    if (m < min) min = m;
    if (m > max) max = m;
  }
  return { min, max };
}

export function colorFor(value: number, range: ColormapRange): string {
  const span = range.max - range.min;
  const t = span > 0 ? Math.min(1, Math.max(0, (value - range.min) / span)) : 0;
  const x = t * (RAMP.length - 1);
  const i = Math.min(RAMP.length - 2, Math.floor(x));
  const f = x - i;
  const a = RAMP[i];
  const b = RAMP[i + 1];
  const c = [0, 1, 2].map((k) => Math.round(a[k] + f * (b[k] - a[k])));
  return `rgb(${c[0]},${c[1]},${c[2]})`;
}

/**
 * Vertices above the ROI threshold; matches the solver's sidecar rule
 * (strictly greater than the threshold).
 */
export function roiSet(magnitudes: number[], threshold: number): Set<number> {
  const out = new Set<number>();
  magnitudes.forEach((m, i) => {
    if (m > threshold) out.add(i);
  });
  return out;
}
