import { readFileSync } from "node:fs";

export interface Table {
  header: string[];
  rows: number[][];
  /** raw string cells for non-numeric columns (same shape as rows) */
  cells: string[][];
}

export class CsvError extends Error {}

/** Parse a plain numeric CSV (no quoting) produced by the experiment runner. */
export function parseCsv(text: string, path = "<csv>"): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new CsvError(`${path}: empty file`);
  }
  const header = lines[0].split(",");
  if (lines.length === 1) {
    throw new CsvError(`${path}: no data rows`);
  }
  const rows: number[][] = [];
  const cells: string[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== header.length) {
      throw new CsvError(
        `${path}:${i + 1}: expected ${header.length} columns, got ${parts.length}`
      );
    }
    cells.push(parts);
    rows.push(parts.map((p) => Number(p)));
  }
  return { header, rows, cells };
}

export function readCsv(path: string): Table {
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch (err) {
    throw new CsvError(`${path}: ${(err as Error).message}`);
  }
  return parseCsv(text, path);
}

/** Column index by name, or throw naming the file. */
export function column(table: Table, name: string, path = "<csv>"): number {
  const idx = table.header.indexOf(name);
  if (idx < 0) {
    throw new CsvError(`${path}: missing column '${name}' (have: ${table.header.join(", ")})`);
  }
  return idx;
}

export function numbers(table: Table, name: string, path = "<csv>"): number[] {
  const idx = column(table, name, path);
  const values = table.rows.map((r) => r[idx]);
  if (values.some((v) => Number.isNaN(v))) {
    throw new CsvError(`${path}: non-numeric value in column '${name}'`);
  }
  return values;
}
