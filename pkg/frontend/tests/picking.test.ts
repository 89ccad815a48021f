import { describe, expect, it } from "vitest";

import { pickVertex } from "../src/picking.js";

describe("pickVertex", () => {
  const projected = [100, 100, 200, 100, 150, 180];

  it("returns the vertex under the pointer", () => {
    expect(pickVertex(100, 100, projected)).toBe(0);
    expect(pickVertex(201, 99, projected)).toBe(1);
  });

  it("returns null in empty space", () => {
    expect(pickVertex(400, 400, projected)).toBeNull();
    expect(pickVertex(130, 100, projected, 12)).toBeNull();
  });

  it("prefers the nearer of two candidates within the radius", () => {
    // pointer closer to vertex 1
    expect(pickVertex(196, 100, [190, 100, 200, 100], 20)).toBe(1);
  });

  it("breaks exact ties toward the lower index", () => {
    // equidistant between vertices 0 and 1
    expect(pickVertex(195, 100, [190, 100, 200, 100], 20)).toBe(0);
    // same geometry, reversed order: still the lower index wins
    expect(pickVertex(195, 100, [200, 100, 190, 100], 20)).toBe(0);
  });

  it("includes vertices exactly at the pick radius", () => {
    expect(pickVertex(112, 100, [100, 100], 12)).toBe(0);
  });
});
