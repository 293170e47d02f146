/**
 * Per-tracklet colors, bit-identical to the ones the annotation service
 * bakes into its top-down PNGs, so client overlays land on server strokes
 * without a visible seam.
 */

/** Golden-angle hue walk; consecutive ids land far apart on the wheel. */
export function idColor(trackId: number): [number, number, number] {
  const hue = (trackId * 0.61803398875) % 1.0;
  const [r, g, b] = hsvToRgb(hue, 0.85, 1.0);
  // truncation, not rounding, to match the server exactly
  return [Math.trunc(r * 255), Math.trunc(g * 255), Math.trunc(b * 255)];
}

export function idColorCss(trackId: number): string {
  const [r, g, b] = idColor(trackId);
  return `rgb(${r}, ${g}, ${b})`;
}

function hsvToRgb(h: number, s: number, v: number): [number, number, number] {
  if (s === 0.0) return [v, v, v];
  const i = Math.trunc(h * 6.0) % 6;
  const f = h * 6.0 - Math.trunc(h * 6.0);
  const p = v * (1.0 - s);
  const q = v * (1.0 - s * f);
  const t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0:
      return [v, t, p];
    case 1:
      return [q, v, p];
    case 2:
      return [p, v, t];
    case 3:
      return [p, q, v];
    case 4:
      return [t, p, v];
    default:
      return [v, p, q];
  }
}
