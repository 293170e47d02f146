import { describe, expect, it } from "vitest";

import { idColor, idColorCss } from "../src/palette";

// Expected triples computed with the annotation service's own palette
// function — the overlay colors must be bit-identical to the colors the
// server bakes into its top-down PNGs.
const SERVER_COLORS: [number, [number, number, number]][] = [
  [1, [38, 101, 255]],
  [2, [164, 255, 38]],
  [3, [255, 38, 227]],
  [4, [38, 255, 218]],
  [5, [255, 155, 38]],
  [6, [92, 38, 255]],
  [7, [47, 255, 38]],
  [8, [255, 38, 110]],
  [9, [38, 173, 255]],
  [10, [237, 255, 38]],
  [11, [209, 38, 255]],
  [12, [38, 255, 146]],
  [13, [255, 83, 38]],
  [14, [38, 56, 255]],
  [15, [119, 255, 38]],
  [16, [255, 38, 183]],
  [17, [38, 246, 255]],
  [18, [255, 200, 38]],
  [19, [137, 38, 255]],
  [20, [38, 255, 73]],
  [21, [255, 38, 65]],
  [22, [38, 129, 255]],
  [23, [192, 255, 38]],
  [24, [254, 38, 255]],
  [25, [38, 255, 191]],
  [26, [255, 127, 38]],
  [27, [64, 38, 255]],
  [28, [75, 255, 38]],
  [29, [255, 38, 138]],
  [30, [38, 201, 255]],
  [31, [255, 245, 38]],
  [32, [181, 38, 255]],
];

describe("id palette", () => {
  it("matches the server's colors exactly", () => {
    for (const [id, rgb] of SERVER_COLORS) {
      expect(idColor(id), `id ${id}`).toEqual(rgb);
    }
    // spot checks outside the 1..32 range
    expect(idColor(0)).toEqual([255, 38, 38]);
    expect(idColor(100)).toEqual([216, 38, 255]);
    expect(idColor(12345)).toEqual([38, 86, 255]);
  });

  it("is deterministic and well spread", () => {
    expect(idColor(7)).toEqual(idColor(7));
    const twelve = new Set(
      Array.from({ length: 12 }, (_, i) => idColor(i + 1).join(",")),
    );
    expect(twelve.size).toBe(12);
  });

  it("renders css rgb() strings", () => {
    expect(idColorCss(1)).toBe("rgb(38, 101, 255)");
  });
});
