#!/usr/bin/env node
// plot <panel|all> --in DIR --out DIR
//
// Consumes the experiment runner's CSV files and writes one SVG per panel.
// Exits nonzero on unknown panels, missing/empty/malformed CSV, or missing
// columns; rendering never re-derives numeric results.

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { renderPanels } from "./panels.js";

function usage(): never {
  console.error("usage: plot <panel|all> --in DIR [--out DIR]");
  process.exit(2);
}

export function main(argv: string[]): number {
  const args = [...argv];
  const panel = args.shift();
  if (!panel || panel === "--help" || panel === "-h") usage();
  let inDir = ".";
  let outDir = ".";
  while (args.length) {
    const flag = args.shift();
    if (flag === "--in") {
      const v = args.shift();
      if (!v) usage();
      inDir = v;
    } else if (flag === "--out") {
      const v = args.shift();
      if (!v) usage();
      outDir = v;
    } else {
      usage();
    }
  }

  let rendered;
  try {
    rendered = renderPanels(panel, inDir);
  } catch (err) {
    console.error(`plot: ${(err as Error).message}`);
    return 1;
  }
  mkdirSync(outDir, { recursive: true });
  for (const { file, svg } of rendered) {
    const path = join(outDir, file);
    writeFileSync(path, svg);
    console.log(`wrote ${path}`);
  }
  return 0;
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
