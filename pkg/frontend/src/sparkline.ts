/** SVG path for a reading series, scaled to the given viewport. */
export function sparklinePath(
  points: [number, number][],
  width = 120,
  height = 28,
  pad = 2,
): string {
  if (points.length === 0) return "";
  const ts = points.map(([t]) => t);
  const vs = points.map(([, v]) => v);
  const tMin = Math.min(...ts);
  const tMax = Math.max(...ts);
  const vMin = Math.min(...vs);
  const vMax = Math.max(...vs);
  const tSpan = tMax - tMin || 1;
  const vSpan = vMax - vMin || 1;
  const innerW = width - 2 * pad;
  const innerH = height - 2 * pad;
  return points
    .map(([t, v], i) => {
      const x = pad + ((t - tMin) / tSpan) * innerW;
      const y = pad + (1 - (v - vMin) / vSpan) * innerH;
      return `${i === 0 ? "M" : "L"}${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
}
