import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { renderCompareChart, renderTimelineChart } from "../src/charts.js";
import { RecipeDoc, recipeDuration, recipeSeries } from "../src/timeline.js";

const sample = JSON.parse(
  readFileSync(new URL("../../data/sample_recipe.json", import.meta.url), "utf-8"),
) as RecipeDoc;

describe("timeline chart", () => {
  it("renders one step path per variable of the sample recipe", () => {
    const svg = renderTimelineChart(recipeSeries(sample), recipeDuration(sample), "hours");
    expect(svg).toMatch(/^<svg /);
    for (const variable of ["air_temperature", "air_humidity", "light_illuminance"]) {
      expect(svg).toContain(`data-variable="${variable}"`);
    }
    expect((svg.match(/<path class="step"/g) ?? []).length).toBe(3);
    // the x axis spans the full 48 h in the chosen unit
    expect(svg).toContain("48 hours");
  });

  it("marks bookmarks on the chart", () => {
    const svg = renderTimelineChart(recipeSeries(sample), recipeDuration(sample),
      "hours", [{ t: 43200, label: "day flip" }]);
    expect(svg).toContain('class="bookmark"');
    expect(svg).toContain("day flip");
  });

  it("escapes markup in labels", () => {
    const svg = renderTimelineChart(recipeSeries(sample), recipeDuration(sample),
      "hours", [{ t: 0, label: "<script>" }]);
    expect(svg).not.toContain("<script>");
    expect(svg).toContain("&lt;script&gt;");
  });
});

describe("compare chart", () => {
  it("draws measured samples against the desired step line", () => {
    const svg = renderCompareChart("air_temperature", [
      { t: 0, measured: 22.0, desired: 25 },
      { t: 10, measured: 22.5, desired: 25 },
      { t: 20, measured: null, desired: 25 },
      { t: 30, measured: 23.1, desired: 25 },
    ], "seconds");
    expect(svg).toContain('class="measured"');
    expect(svg).toContain('class="step desired"');
    const points = svg.match(/points="([^"]+)"/)![1]!;
    expect(points.split(" ")).toHaveLength(3); // null samples leave gaps
  });

  it("copes with empty history", () => {
    expect(renderCompareChart("air_temperature", [], "seconds")).toMatch(/^<svg /);
  });
});
