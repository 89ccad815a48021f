import { describe, expect, it } from "vitest";

import { fitCamera, project, unprojectDelta } from "../src/camera.js";
import { buildDrawLists, wireframeEdges } from "../src/render.js";
import type { Frame, MeshTopology } from "../src/protocol.js";

const screen = { width: 800, height: 600 };

describe("camera", () => {
  it("fits the shape inside the screen", () => {
    const pos = [0, 0, 4, 0, 4, 1, 0, 1];
    const cam = fitCamera(pos, 2, screen);
    const proj = project(pos, cam, screen);
    for (let i = 0; i < proj.length; i += 2) {
      expect(proj[i]).toBeGreaterThan(0);
      expect(proj[i]).toBeLessThan(screen.width);
      expect(proj[i + 1]).toBeGreaterThan(0);
      expect(proj[i + 1]).toBeLessThan(screen.height);
    }
  });

  it("2D screen deltas unproject to matching world deltas", () => {
    const cam = fitCamera([0, 0, 2, 0, 2, 2, 0, 2], 2, screen);
    const w = unprojectDelta(cam.zoom * 0.5, -cam.zoom * 0.25, cam);
    expect(w[0]).toBeCloseTo(0.5, 12);
    expect(w[1]).toBeCloseTo(0.25, 12);
    expect(w[2]).toBe(0);
  });

  it("3D unprojected view-plane deltas project back to the screen delta", () => {
    const pos = [0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1];
    const cam = fitCamera(pos, 3, screen);
    const delta = unprojectDelta(24, -18, cam);
    const a = project([0, 0, 0], cam, screen);
    const b = project(delta, cam, screen);
    expect(b[0] - a[0]).toBeCloseTo(24, 9);
    expect(b[1] - a[1]).toBeCloseTo(-18, 9);
  });
});

describe("render draw lists", () => {
  const topo: MeshTopology = {
    type: "MeshTopology", protocol: 1, kind: "triangle", embed: 2,
    elements: [[0, 1, 2], [0, 2, 3]],
    restPositions: [0, 0, 1, 0, 1, 1, 0, 1],
    handles: [1], roiThreshold: 1e-3,
  };

  it("wireframe edges are unique and undirected", () => {
    const edges = wireframeEdges(topo.elements);
    expect(edges).toHaveLength(5); // 4 boundary + 1 shared diagonal
    const keys = new Set(edges.map(([a, b]) => `${a},${b}`));
    expect(keys.size).toBe(5);
  });

  it("rest frame: uniform color, empty ROI", () => {
    const frame: Frame = {
      type: "Frame", protocol: 1, iteration: 0,
      positions: topo.restPositions,
      displacement: [0, 0, 0, 0],
      residuals: { primalZ: 0, dualZ: 0, primalX: 0 },
      roi: { threshold: 1e-3, count: 0, measure: 0 },
    };
    const cam = fitCamera(topo.restPositions, 2, screen);
    const lists = buildDrawLists(topo, frame, cam, screen, 1e-3, topo.handles);
    expect(lists.roi.size).toBe(0);
    expect(new Set(lists.colors).size).toBe(1);
    expect(lists.range).toEqual({ min: 0, max: 0 });
  });

  it("one vertex above threshold: exactly one highlight; endpoints match", () => {
    const frame: Frame = {
      type: "Frame", protocol: 1, iteration: 5,
      positions: topo.restPositions,
      displacement: [0, 0.02, 0, 0.0005],
      residuals: { primalZ: 0, dualZ: 0, primalX: 0 },
      roi: { threshold: 1e-3, count: 1, measure: 0.1 },
    };
    const cam = fitCamera(topo.restPositions, 2, screen);
    const lists = buildDrawLists(topo, frame, cam, screen, 1e-3, topo.handles);
    expect([...lists.roi]).toEqual([1]);
    expect(lists.range.min).toBe(0);
    expect(lists.range.max).toBe(0.02);
  });
});
