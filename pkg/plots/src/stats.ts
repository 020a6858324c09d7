export function mean(values: number[]): number {
  if (values.length === 0) return NaN;
  return values.reduce((a, b) => a + b, 0) / values.length;
}

/** Population standard deviation (matches the runner's summary files). */
export function std(values: number[]): number {
  if (values.length === 0) return NaN;
  const m = mean(values);
  return Math.sqrt(mean(values.map((v) => (v - m) * (v - m))));
}

export function median(values: number[]): number {
  if (values.length === 0) return NaN;
  const sorted = [...values].sort((a, b) => a - b);
  const mid = Math.floor(sorted.length / 2);
  return sorted.length % 2 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2;
}

export interface Aggregated {
  x: number[];
  mean: number[];
  std: number[];
  count: number[];
}

/** Group y by x (e.g. seeds collapse onto steps) and aggregate mean/std. */
export function aggregateByX(xs: number[], ys: number[]): Aggregated {
  const groups = new Map<number, number[]>();
  for (let i = 0; i < xs.length; i++) {
    const bucket = groups.get(xs[i]);
    if (bucket) bucket.push(ys[i]);
    else groups.set(xs[i], [ys[i]]);
  }
  const x = [...groups.keys()].sort((a, b) => a - b);
  return {
    x,
    mean: x.map((k) => mean(groups.get(k)!)),
    std: x.map((k) => std(groups.get(k)!)),
    count: x.map((k) => groups.get(k)!.length),
  };
}
