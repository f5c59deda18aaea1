/**
 * SVG chart builders. Pure functions from series to markup strings; the DOM
 * layer assigns them to innerHTML. Step lines for setpoints, dot-joined
 * polylines for measurements.
 */

import type { HistorySample } from "./dashboard.js";
import { AxisTick, StepSeries, TimeUnit, axisTicks, stepPath, toUnit } from "./timeline.js";

export interface ChartBox {
  width: number;
  height: number;
  padLeft: number;
  padRight: number;
  padTop: number;
  padBottom: number;
}

export const DEFAULT_BOX: ChartBox = {
  width: 640,
  height: 180,
  padLeft: 56,
  padRight: 16,
  padTop: 12,
  padBottom: 26,
};

const PALETTE = ["#2b8a3e", "#1971c2", "#e8590c", "#9c36b5", "#c92a2a",
                 "#0b7285", "#5c940d", "#862e9c"];

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

interface Range {
  min: number;
  max: number;
}

function valueRange(values: number[]): Range {
  if (values.length === 0) return { min: 0, max: 1 };
  let min = Math.min(...values);
  let max = Math.max(...values);
  if (min === max) {
    min -= 1;
    max += 1;
  }
  const margin = (max - min) * 0.08;
  return { min: min - margin, max: max + margin };
}

function scales(box: ChartBox, durationS: number, range: Range) {
  const xOf = (t: number) =>
    box.padLeft + (durationS === 0 ? 0 : (t / durationS) * (box.width - box.padLeft - box.padRight));
  const yOf = (v: number) =>
    box.height - box.padBottom -
    ((v - range.min) / (range.max - range.min)) * (box.height - box.padTop - box.padBottom);
  return { xOf, yOf };
}

function axisMarkup(box: ChartBox, ticks: AxisTick[], xOf: (t: number) => number,
                    range: Range, yOf: (v: number) => number): string {
  const parts: string[] = [];
  const y0 = box.height - box.padBottom;
  parts.push(`<line class="axis" x1="${box.padLeft}" y1="${y0}" x2="${box.width - box.padRight}" y2="${y0}"/>`);
  for (const tick of ticks) {
    const x = xOf(tick.t);
    parts.push(`<line class="tick" x1="${x}" y1="${y0}" x2="${x}" y2="${y0 + 4}"/>`);
    parts.push(`<text class="tick-label" x="${x}" y="${y0 + 16}" text-anchor="middle">${esc(tick.label)}</text>`);
  }
  for (const v of [range.min, (range.min + range.max) / 2, range.max]) {
    const y = yOf(v);
    parts.push(`<text class="tick-label" x="${box.padLeft - 6}" y="${y + 3}" text-anchor="end">${esc(v.toFixed(1))}</text>`);
  }
  return parts.join("");
}

/**
 * The recipe-timeline chart: one step line per variable over the full
 * duration, with optional bookmark markers.
 */
export function renderTimelineChart(
  series: StepSeries[],
  durationS: number,
  unit: TimeUnit,
  bookmarks: { t: number; label: string }[] = [],
  box: ChartBox = DEFAULT_BOX,
): string {
  const values = series.flatMap((s) => s.points.map((p) => p.value));
  const range = valueRange(values);
  const { xOf, yOf } = scales(box, Math.max(durationS, 1), range);
  const parts: string[] = [];
  parts.push(axisMarkup(box, axisTicks(durationS, unit), xOf, range, yOf));
  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    parts.push(`<path class="step" data-variable="${esc(s.variable)}" d="${stepPath(s, xOf, yOf, durationS)}" stroke="${color}" fill="none"/>`);
    for (const p of s.points) {
      parts.push(`<circle data-variable="${esc(s.variable)}" cx="${xOf(p.t)}" cy="${yOf(p.value)}" r="2.5" fill="${color}"/>`);
    }
  });
  for (const bm of bookmarks) {
    const x = xOf(bm.t);
    parts.push(`<line class="bookmark" x1="${x}" y1="${box.padTop}" x2="${x}" y2="${box.height - box.padBottom}"/>`);
    parts.push(`<text class="bookmark-label" x="${x + 3}" y="${box.padTop + 10}">${esc(bm.label)}</text>`);
  }
  const legend = series.map((s, i) =>
    `<tspan fill="${PALETTE[i % PALETTE.length]}">■ ${esc(s.variable)}  </tspan>`).join("");
  parts.push(`<text class="legend" x="${box.padLeft}" y="${box.padTop}">${legend}</text>`);
  return svg(box, parts.join(""));
}

/** Measured (dots+line) against desired (step line) for one variable. */
export function renderCompareChart(
  variable: string,
  samples: HistorySample[],
  unit: TimeUnit,
  box: ChartBox = DEFAULT_BOX,
): string {
  const values: number[] = [];
  for (const s of samples) {
    if (s.measured !== null) values.push(s.measured);
    if (s.desired !== null) values.push(s.desired);
  }
  const range = valueRange(values);
  const t0 = samples.length ? samples[0]!.t : 0;
  const t1 = samples.length ? samples[samples.length - 1]!.t : 1;
  const span = Math.max(t1 - t0, 1);
  const { yOf } = scales(box, 1, range);
  const xOf = (t: number) =>
    box.padLeft + ((t - t0) / span) * (box.width - box.padLeft - box.padRight);

  const measured = samples.filter((s) => s.measured !== null)
    .map((s) => `${xOf(s.t)},${yOf(s.measured as number)}`).join(" ");
  const desiredSeries: StepSeries = {
    variable,
    points: samples.filter((s) => s.desired !== null)
      .map((s) => ({ t: s.t, value: s.desired as number })),
  };
  const ticks: AxisTick[] = axisTicks(span, unit, 4)
    .map((tick) => ({ t: t0 + tick.t, label: tick.label }));
  const parts: string[] = [];
  const y0 = box.height - box.padBottom;
  parts.push(`<line class="axis" x1="${box.padLeft}" y1="${y0}" x2="${box.width - box.padRight}" y2="${y0}"/>`);
  for (const tick of ticks) {
    parts.push(`<text class="tick-label" x="${xOf(tick.t)}" y="${y0 + 16}" text-anchor="middle">+${esc(tick.label)}</text>`);
  }
  for (const v of [range.min, range.max]) {
    parts.push(`<text class="tick-label" x="${box.padLeft - 6}" y="${yOf(v) + 3}" text-anchor="end">${esc(v.toFixed(1))}</text>`);
  }
  if (desiredSeries.points.length) {
    parts.push(`<path class="step desired" d="${stepPath(desiredSeries, xOf, yOf, t1)}" stroke="#1971c2" stroke-dasharray="5 3" fill="none"/>`);
  }
  if (measured) {
    parts.push(`<polyline class="measured" points="${measured}" stroke="#2b8a3e" fill="none"/>`);
  }
  parts.push(`<text class="legend" x="${box.padLeft}" y="${box.padTop}">` +
    `<tspan fill="#2b8a3e">■ measured  </tspan>` +
    `<tspan fill="#1971c2">■ desired</tspan></text>`);
  return svg(box, parts.join(""));
}

function svg(box: ChartBox, inner: string): string {
  return `<svg viewBox="0 0 ${box.width} ${box.height}" role="img">${inner}</svg>`;
}
