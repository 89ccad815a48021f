/** Canvas rendering of frames: mesh, displacement colormap, ROI, handles. */

import type { Camera, Screen } from "./camera.js";
import { project } from "./camera.js";
import { colorFor, colormapRange, roiSet } from "./colormap.js";
import type { ColormapRange } from "./colormap.js";
import type { Frame, MeshTopology } from "./protocol.js";

export interface DrawLists {
  projected: Float64Array;
  edges: [number, number][];
  colors: string[];
  range: ColormapRange;
  roi: Set<number>;
  handles: number[];
}

const EDGE_PAIRS: Record<number, [number, number][]> = {
  2: [[0, 1]],
  3: [[0, 1], [1, 2], [2, 0]],
  4: [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]],
};

/** Unique wireframe edges of the topology. */
export function wireframeEdges(elements: number[][]): [number, number][] {
  const seen = new Set<string>();
  const out: [number, number][] = [];
  for (const el of elements) {
    for (const [a, b] of EDGE_PAIRS[el.length] ?? []) {
      const i = el[a];
      const j = el[b];
      const key = i < j ? `${i},${j}` : `${j},${i}`;
      if (!seen.has(key)) {
        seen.add(key);
        out.push(i < j ? [i, j] : [j, i]);
      }
    }
  }
  return out;
}

/**
 * Everything render needs, as data: projected positions, per-vertex colors
 * from the frame's displacement magnitudes (endpoints = min/max of the
 * frame), the ROI highlight set, and the handle markers.
 */
export function buildDrawLists(
  topo: MeshTopology,
  frame: Frame,
  camera: Camera,
  screen: Screen,
  roiThreshold: number,
  handles: number[],
): DrawLists {
  const projected = project(frame.positions, camera, screen);
  const range = colormapRange(frame.displacement);
  const colors = frame.displacement.map((m) => colorFor(m, range));
  return {
    projected,
    edges: wireframeEdges(topo.elements),
    colors,
    range,
    roi: roiSet(frame.displacement, roiThreshold),
    handles,
  };
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  screen: Screen,
  lists: DrawLists,
  selectionPreview: number | null,
): void {
  ctx.clearRect(0, 0, screen.width, screen.height);
  const p = lists.projected;

  ctx.lineWidth = 1;
  ctx.strokeStyle = "rgba(120,130,150,0.45)";
  ctx.beginPath();
  for (const [i, j] of lists.edges) {
    ctx.moveTo(p[i * 2], p[i * 2 + 1]);
    ctx.lineTo(p[j * 2], p[j * 2 + 1]);
  }
  ctx.stroke();

  const n = p.length / 2;
  for (let i = 0; i < n; i++) {
    ctx.fillStyle = lists.colors[i];
    ctx.beginPath();
    ctx.arc(p[i * 2], p[i * 2 + 1], 2.4, 0, 2 * Math.PI);
    ctx.fill();
  }

  // ROI ring highlights
  ctx.strokeStyle = "rgba(215,60,60,0.9)";
  ctx.lineWidth = 1.4;
  for (const i of lists.roi) {
    ctx.beginPath();
    ctx.arc(p[i * 2], p[i * 2 + 1], 4.5, 0, 2 * Math.PI);
    ctx.stroke();
  }

  // handles drawn distinctly
  ctx.fillStyle = "#f2c230";
  ctx.strokeStyle = "#5c4a00";
  for (const i of lists.handles) {
    ctx.beginPath();
    ctx.rect(p[i * 2] - 4, p[i * 2 + 1] - 4, 8, 8);
    ctx.fill();
    ctx.stroke();
  }

  if (selectionPreview !== null) {
    const i = selectionPreview;
    ctx.strokeStyle = "#3a79d8";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(p[i * 2], p[i * 2 + 1], 7, 0, 2 * Math.PI);
    ctx.stroke();
  }
}
