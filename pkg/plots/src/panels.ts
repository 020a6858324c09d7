import { existsSync } from "node:fs";
import { join } from "node:path";

import { CsvError, Table, column, numbers, readCsv } from "./csv.js";
import { aggregateByX } from "./stats.js";
import { ChartSpec, Series, renderChart } from "./svg.js";

export interface Rendered {
  file: string;
  svg: string;
}

type PanelFn = (inDir: string) => Rendered[];

function table(inDir: string, name: string): { t: Table; path: string } {
  const path = join(inDir, `${name}.csv`);
  return { t: readCsv(path), path };
}

/** One mean line with a +-1 std band per y column, grouped over seeds. */
function bandSeries(t: Table, path: string, xCol: string, yCols: string[]): Series[] {
  const xs = numbers(t, xCol, path);
  return yCols.map((name) => {
    const agg = aggregateByX(xs, numbers(t, name, path));
    const banded = agg.count.some((c) => c > 1);
    return {
      label: name,
      x: agg.x,
      y: agg.mean,
      band: banded ? agg.std : undefined,
    };
  });
}

function chart(file: string, spec: ChartSpec): Rendered {
  return { file, svg: renderChart(spec) };
}

function distancePanel(name: string, title: string, yCols?: string[]): PanelFn {
  return (inDir) => {
    const { t, path } = table(inDir, name);
    const cols = yCols ?? t.header.filter((h) => h.startsWith("dist_"));
    if (cols.length === 0) throw new CsvError(`${path}: no distance columns`);
    return [
      chart(`${name}.svg`, {
        title,
        xLabel: "inference step",
        yLabel: "euclidean distance",
        logY: true,
        series: bandSeries(t, path, "step", cols),
      }),
    ];
  };
}

function layerTracePanel(name: string, title: string): PanelFn {
  return (inDir) => {
    const { t, path } = table(inDir, name);
    const seedIdx = column(t, "seed", path);
    const firstSeed = t.rows[0][seedIdx];
    const keep = t.rows.filter((r) => r[seedIdx] === firstSeed);
    const steps = keep.map((r) => r[column(t, "step", path)]);
    const actCols = t.header.filter((h) => h.startsWith("act_"));
    const eqCols = t.header.filter((h) => h.startsWith("eq_"));
    if (actCols.length === 0) throw new CsvError(`${path}: no activity columns`);
    const series: Series[] = [];
    actCols.forEach((name_, i) => {
      series.push({ label: name_, x: steps, y: keep.map((r) => r[column(t, name_, path)]) });
    });
    eqCols.forEach((name_, i) => {
      series.push({
        label: i === 0 ? "equilibrium" : "",
        x: steps,
        y: keep.map((r) => r[column(t, name_, path)]),
        color: "#999",
        dashed: true,
      });
    });
    return [
      chart(`${name}.svg`, {
        title,
        xLabel: "inference step",
        yLabel: "activity",
        series,
      }),
    ];
  };
}

function ratioPanel(name: string, title: string, yLabel: string): PanelFn {
  return (inDir) => {
    const { t, path } = table(inDir, name);
    const yCols = t.header.filter((h) => h !== "seed" && h !== "ratio");
    return [
      chart(`${name}.svg`, {
        title,
        xLabel: "feedback/feedforward precision ratio",
        yLabel,
        logX: true,
        series: bandSeries(t, path, "ratio", yCols),
      }),
    ];
  };
}

export const PANELS: Record<string, PanelFn> = {
  fig1a: distancePanel("fig1a", "Free activities closing on the inverse targets"),
  fig1b: layerTracePanel("fig1b", "Hidden activities relaxing onto the linear equilibrium"),
  fig1c: distancePanel("fig1c", "Distance to the linear equilibrium", ["dist_eq"]),
  fig2: ratioPanel("fig2", "Equilibrium interpolation across precision ratios", "euclidean distance"),
  fig3a: layerTracePanel("fig3a", "Activities relaxing onto the precision-weighted equilibrium"),
  fig3b: distancePanel("fig3b", "Distance to the precision-weighted equilibrium", ["dist_eq"]),
  fig3c: ratioPanel("fig3c", "Similarity to backprop gradients and inverse targets", "cosine similarity"),
  fig4a: (inDir) => {
    const { t, path } = table(inDir, "fig4a");
    return [
      chart("fig4a.svg", {
        title: "Energy decomposition during inference",
        xLabel: "inference step",
        yLabel: "energy",
        series: bandSeries(t, path, "step", ["F", "L", "E_tilde"]),
      }),
    ];
  },
  fig4b: (inDir) => {
    const { t, path } = table(inDir, "fig4b");
    return [
      chart("fig4b.svg", {
        title: "Output-loss change across each inference phase",
        xLabel: "epoch",
        yLabel: "delta L",
        series: bandSeries(t, path, "epoch", ["delta_L"]),
      }),
    ];
  },
  fig4c: (inDir) => {
    const { t, path } = table(inDir, "fig4c");
    return [
      chart("fig4c.svg", {
        title: "Full-batch digit training",
        xLabel: "epoch",
        yLabel: "loss / gradient norm",
        logY: true,
        series: bandSeries(t, path, "epoch", ["loss", "bp_grad_norm", "pc_grad_norm"]),
      }),
    ];
  },
  fig4d: (inDir) => {
    const { t, path } = table(inDir, "fig4d");
    const cols = t.header.filter((h) => h.startsWith("cos_sim_layer_"));
    if (cols.length === 0) throw new CsvError(`${path}: no cosine columns`);
    return [
      chart("fig4d.svg", {
        title: "Per-layer cosine between consolidation and backprop updates",
        xLabel: "epoch",
        yLabel: "cosine similarity",
        series: bandSeries(t, path, "epoch", cols),
      }),
    ];
  },
  fig4e: (inDir) => {
    const { t, path } = table(inDir, "fig4e");
    return [
      chart("fig4e.svg", {
        title: "Relaxation vs backprop trainer on held-out digits",
        xLabel: "epoch",
        yLabel: "test accuracy",
        series: bandSeries(t, path, "epoch", ["pc_test_acc", "bp_test_acc"]),
      }),
    ];
  },
};

/** Render one panel, or every fig* panel whose CSV exists when name is "all". */
export function renderPanels(name: string, inDir: string): Rendered[] {
  if (name === "all") {
    const out: Rendered[] = [];
    let found = 0;
    for (const [panel, fn] of Object.entries(PANELS)) {
      if (existsSync(join(inDir, `${panel}.csv`))) {
        found += 1;
        out.push(...fn(inDir));
      }
    }
    if (found === 0) {
      throw new CsvError(`no fig*.csv files found in ${inDir}`);
    }
    return out;
  }
  const fn = PANELS[name];
  if (!fn) {
    throw new CsvError(`unknown panel '${name}' (have: ${Object.keys(PANELS).join(", ")}, all)`);
  }
  return fn(inDir);
}
