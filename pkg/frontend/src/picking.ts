/** Vertex picking in screen space. */

export const PICK_RADIUS_PX = 12;

/**
 * Nearest vertex within `radius` pixels of the pointer, or null when
 * nothing is close enough. Distance ties are broken toward the lower
 * vertex index (the scan keeps the first of equally near vertices).
 */
export function pickVertex(
  px: number,
  py: number,
  projected: ArrayLike<number>,
  radius: number = PICK_RADIUS_PX,
): number | null {
  const n = Math.floor(projected.length / 2);
  let best: number | null = null;
  let bestD2 = radius * radius;
  for (let i = 0; i < n; i++) {
    const dx = projected[i * 2] - px;
    const dy = projected[i * 2 + 1] - py;
    const d2 = dx * dx + dy * dy;
    if (d2 < bestD2 || (d2 === bestD2 && best === null)) {
      best = i;
      bestD2 = d2;
    }
  }
  return best;
}
