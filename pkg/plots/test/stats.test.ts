import { describe, expect, it } from "vitest";

import { aggregateByX, mean, median, std } from "../src/stats.js";

describe("mean/std/median", () => {
  it("computes the mean", () => {
    expect(mean([1, 2, 3, 4])).toBe(2.5);
  });

  it("population std matches a hand-computed case", () => {
    // values 2,4,4,4,5,5,7,9 -> std exactly 2
    expect(std([2, 4, 4, 4, 5, 5, 7, 9])).toBeCloseTo(2, 12);
  });

  it("median handles odd and even lengths", () => {
    expect(median([3, 1, 2])).toBe(2);
    expect(median([4, 1, 3, 2])).toBe(2.5);
  });

  it("empty input yields NaN", () => {
    expect(Number.isNaN(mean([]))).toBe(true);
    expect(Number.isNaN(std([]))).toBe(true);
  });
});

describe("aggregateByX", () => {
  it("groups seeds onto shared x values in sorted order", () => {
    const agg = aggregateByX([10, 0, 10, 0], [3, 1, 5, 1]);
    expect(agg.x).toEqual([0, 10]);
    expect(agg.mean).toEqual([1, 4]);
    expect(agg.std[0]).toBe(0);
    expect(agg.std[1]).toBe(1);
    expect(agg.count).toEqual([2, 2]);
  });

  it("single group keeps every sample", () => {
    const agg = aggregateByX([1, 1, 1], [1, 2, 3]);
    expect(agg.x).toEqual([1]);
    expect(agg.mean).toEqual([2]);
    expect(agg.count).toEqual([3]);
  });
});
