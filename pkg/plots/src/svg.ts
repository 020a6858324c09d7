export interface Series {
  label: string;
  x: number[];
  y: number[];
  /** optional symmetric band half-width per point (e.g. one std) */
  band?: number[];
  color?: string;
  dashed?: boolean;
}

export interface ChartSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  series: Series[];
  logX?: boolean;
  logY?: boolean;
  width?: number;
  height?: number;
}

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];
const MARGIN = { top: 36, right: 16, bottom: 44, left: 64 };

function finite(values: number[]): number[] {
  return values.filter((v) => Number.isFinite(v));
}

function niceTicks(lo: number, hi: number, n = 5): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / n)));
  const err = span / (n * step);
  const factor = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = step * factor;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / s) * s; v <= hi + 1e-12 * span; v += s) ticks.push(v);
  return ticks;
}

function logTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.ceil(Math.log10(lo)); Math.pow(10, e) <= hi * 1.0001; e++) {
    ticks.push(Math.pow(10, e));
  }
  return ticks.length ? ticks : [lo];
}

function fmt(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(0).replace("+", "");
  return Number(v.toPrecision(4)).toString();
}

/** Render a line chart (optionally with std bands) as a standalone SVG. */
export function renderChart(spec: ChartSpec): string {
  const width = spec.width ?? 640;
  const height = spec.height ?? 420;
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;

  const xsAll: number[] = [];
  const ysAll: number[] = [];
  for (const s of spec.series) {
    xsAll.push(...finite(s.x));
    const lo = s.band ? s.y.map((v, i) => v - (s.band![i] ?? 0)) : s.y;
    const hiV = s.band ? s.y.map((v, i) => v + (s.band![i] ?? 0)) : s.y;
    ysAll.push(...finite(lo), ...finite(hiV));
  }
  if (xsAll.length === 0 || ysAll.length === 0) {
    throw new Error(`chart '${spec.title}': no finite data to plot`);
  }

  const xPos = xsAll.filter((v) => v > 0);
  const yPos = ysAll.filter((v) => v > 0);
  const logX = Boolean(spec.logX) && xPos.length > 0;
  const logY = Boolean(spec.logY) && yPos.length > 0;
  const tx = (v: number) => (logX ? Math.log10(v) : v);
  const ty = (v: number) => (logY ? Math.log10(v) : v);

  let xLo = Math.min(...(logX ? xPos : xsAll).map(tx));
  let xHi = Math.max(...(logX ? xPos : xsAll).map(tx));
  let yLo = Math.min(...(logY ? yPos : ysAll).map(ty));
  let yHi = Math.max(...(logY ? yPos : ysAll).map(ty));
  if (xHi === xLo) (xLo -= 0.5), (xHi += 0.5);
  if (yHi === yLo) (yLo -= 0.5), (yHi += 0.5);
  const yPad = 0.05 * (yHi - yLo);
  yLo -= yPad;
  yHi += yPad;

  const px = (v: number) => MARGIN.left + ((tx(v) - xLo) / (xHi - xLo)) * plotW;
  const py = (v: number) => MARGIN.top + plotH - ((ty(v) - yLo) / (yHi - yLo)) * plotH;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}" font-family="sans-serif" font-size="12">`
  );
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(
    `<text x="${width / 2}" y="18" text-anchor="middle" font-size="14">${spec.title}</text>`
  );

  const xTicks = logX
    ? logTicks(Math.pow(10, xLo), Math.pow(10, xHi))
    : niceTicks(xLo, xHi);
  const yTicks = logY
    ? logTicks(Math.pow(10, yLo), Math.pow(10, yHi))
    : niceTicks(yLo, yHi);
  for (const t of xTicks) {
    const x = px(t);
    parts.push(
      `<line x1="${x.toFixed(1)}" y1="${MARGIN.top}" x2="${x.toFixed(1)}" y2="${MARGIN.top + plotH}" stroke="#eee"/>`,
      `<text x="${x.toFixed(1)}" y="${MARGIN.top + plotH + 16}" text-anchor="middle">${fmt(t)}</text>`
    );
  }
  for (const t of yTicks) {
    const y = py(t);
    parts.push(
      `<line x1="${MARGIN.left}" y1="${y.toFixed(1)}" x2="${MARGIN.left + plotW}" y2="${y.toFixed(1)}" stroke="#eee"/>`,
      `<text x="${MARGIN.left - 6}" y="${(y + 4).toFixed(1)}" text-anchor="end">${fmt(t)}</text>`
    );
  }
  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${plotW}" height="${plotH}" fill="none" stroke="#444"/>`,
    `<text x="${MARGIN.left + plotW / 2}" y="${height - 8}" text-anchor="middle">${spec.xLabel}</text>`,
    `<text x="16" y="${MARGIN.top + plotH / 2}" text-anchor="middle" transform="rotate(-90 16 ${MARGIN.top + plotH / 2})">${spec.yLabel}</text>`
  );

  spec.series.forEach((s, i) => {
    const color = s.color ?? PALETTE[i % PALETTE.length];
    const keep = s.x
      .map((_, j) => j)
      .filter(
        (j) =>
          Number.isFinite(s.x[j]) &&
          Number.isFinite(s.y[j]) &&
          (!logX || s.x[j] > 0) &&
          (!logY || s.y[j] > 0)
      );
    if (keep.length === 0) return;
    if (s.band && keep.length > 1) {
      const upper = keep.map((j) => {
        const v = logY ? Math.max(s.y[j] + s.band![j], Number.MIN_VALUE) : s.y[j] + s.band![j];
        return `${px(s.x[j]).toFixed(1)},${py(v).toFixed(1)}`;
      });
      const lower = [...keep].reverse().map((j) => {
        const raw = s.y[j] - s.band![j];
        const v = logY ? Math.max(raw, Math.pow(10, yLo)) : raw;
        return `${px(s.x[j]).toFixed(1)},${py(v).toFixed(1)}`;
      });
      parts.push(
        `<polygon points="${upper.join(" ")} ${lower.join(" ")}" fill="${color}" opacity="0.15"/>`
      );
    }
    const points = keep
      .map((j) => `${px(s.x[j]).toFixed(1)},${py(s.y[j]).toFixed(1)}`)
      .join(" ");
    const dash = s.dashed ? ` stroke-dasharray="5,4"` : "";
    parts.push(
      `<polyline points="${points}" fill="none" stroke="${color}" stroke-width="1.6"${dash}/>`
    );
    const lx = MARGIN.left + 10;
    const ly = MARGIN.top + 14 + 16 * i;
    parts.push(
      `<line x1="${lx}" y1="${ly - 4}" x2="${lx + 18}" y2="${ly - 4}" stroke="${color}" stroke-width="2"${dash}/>`,
      `<text x="${lx + 22}" y="${ly}" text-anchor="start" font-size="11">${s.label}</text>`
    );
  });

  parts.push("</svg>");
  return parts.join("\n");
}
