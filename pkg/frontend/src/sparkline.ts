// Feature-vector sparklines: the sample "image" at desk scale is its raw
// feature profile, rendered as a small SVG polyline. Cards deliberately
// show no severity-related metadata, so the judgment comes from the
// rendered profiles alone.

export function sparklinePath(
  values: number[],
  width = 220,
  height = 64,
  pad = 4,
): string {
  if (values.length === 0) return '';
  if (values.length === 1) {
    const y = height / 2;
    return `M ${pad} ${y} L ${width - pad} ${y}`;
  }
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || 1;
  const stepX = (width - 2 * pad) / (values.length - 1);
  const scaleY = (v: number) => height - pad - ((v - lo) / span) * (height - 2 * pad);
  return values
    .map((v, k) => `${k === 0 ? 'M' : 'L'} ${(pad + k * stepX).toFixed(2)} ${scaleY(v).toFixed(2)}`)
    .join(' ');
}

export function sparklineSvg(values: number[], width = 220, height = 64): string {
  const path = sparklinePath(values, width, height);
  return (
    `<svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}" ` +
    `role="img" aria-label="feature profile">` +
    `<path d="${path}" fill="none" stroke="currentColor" stroke-width="1.5"/></svg>`
  );
}
