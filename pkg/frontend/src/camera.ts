/** Screen projection: orthographic pan-zoom for 2D, turntable for 3D. */

export interface Screen {
  width: number;
  height: number;
}

export interface Camera {
  embed: number;
  /** pan in world units (2D) or orbit target (3D) */
  center: [number, number, number];
  zoom: number; // pixels per world unit
  yaw: number; // radians, 3D only
  pitch: number; // radians, 3D only
}

export function fitCamera(positions: number[], embed: number, screen: Screen): Camera {
  const n = positions.length / embed;
  const lo = [Infinity, Infinity, Infinity];
  const hi = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < n; i++) {
    for (let k = 0; k < embed; k++) {
      const v = positions[i * embed + k];
      if (v < lo[k]) lo[k] = v;
      if (v > hi[k]) hi[k] = v;
    }
  }
  for (let k = embed; k < 3; k++) {
    lo[k] = 0;
    hi[k] = 0;
  }
  const center: [number, number, number] = [
    0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
  const spanX = Math.max(hi[0] - lo[0], 1e-9);
  const spanY = Math.max(hi[1] - lo[1], 1e-9);
  const spanZ = Math.max(hi[2] - lo[2], 0);
  const span = Math.max(spanX, spanY, spanZ);
  const zoom = 0.85 * Math.min(screen.width, screen.height) / span;
  return { embed, center, zoom, yaw: embed === 3 ? 0.6 : 0, pitch: embed === 3 ? 0.4 : 0 };
}

function rotatePoint(cam: Camera, x: number, y: number, z: number): [number, number, number] {
  // yaw about the world y axis, then pitch about the camera x axis
  const cy = Math.cos(cam.yaw);
  const sy = Math.sin(cam.yaw);
  const cp = Math.cos(cam.pitch);
  const sp = Math.sin(cam.pitch);
  const x1 = cy * x + sy * z;
  const z1 = -sy * x + cy * z;
  const y2 = cp * y - sp * z1;
  const z2 = sp * y + cp * z1;
  return [x1, y2, z2];
}

/** Project flat world positions to screen pixels; returns (n, 2) flat array. */
export function project(positions: number[], cam: Camera, screen: Screen): Float64Array {
  const e = cam.embed;
  const n = positions.length / e;
  const out = new Float64Array(n * 2);
  for (let i = 0; i < n; i++) {
    let x = positions[i * e] - cam.center[0];
    let y = positions[i * e + 1] - cam.center[1];
    let z = e === 3 ? positions[i * e + 2] - cam.center[2] : 0;
    if (e === 3) {
      [x, y, z] = rotatePoint(cam, x, y, z);
    }
    out[i * 2] = screen.width / 2 + cam.zoom * x;
    out[i * 2 + 1] = screen.height / 2 - cam.zoom * y;
  }
  return out;
}

/**
 * Map a screen-space drag displacement back to a world displacement in the
 * view plane (the plane spanned by the camera's right/up axes).
 */
export function unprojectDelta(dx: number, dy: number, cam: Camera): [number, number, number] {
  const wx = dx / cam.zoom;
  const wy = -dy / cam.zoom;
  if (cam.embed === 2) return [wx, wy, 0];
  // inverse of the pitch*yaw rotation applied to the view-plane delta
  const cy = Math.cos(cam.yaw);
  const sy = Math.sin(cam.yaw);
  const cp = Math.cos(cam.pitch);
  const sp = Math.sin(cam.pitch);
  // camera frame: right = R^T ex = row1(R), up = R^T ey = row2(R)
  const rx = [cy, 0, sy];
  const uy = [sp * sy, cp, -sp * cy];
  return [
    wx * rx[0] + wy * uy[0],
    wx * rx[1] + wy * uy[1],
    wx * rx[2] + wy * uy[2],
  ];
}
