/**
 * Pure recipe-timeline logic: per-variable step series with hold semantics,
 * time-axis scaling, and SVG step-path generation. No DOM access, so every
 * rendering decision is unit-testable.
 */

export type Operation = [number, string, number];

export interface RecipeDoc {
  _id: string;
  format: string;
  operations: Operation[];
  [extra: string]: unknown;
}

export interface StepPoint {
  t: number;
  value: number;
}

export interface StepSeries {
  variable: string;
  points: StepPoint[];
}

export type TimeUnit = "seconds" | "hours" | "days";

const UNIT_SECONDS: Record<TimeUnit, number> = {
  seconds: 1,
  hours: 3600,
  days: 86400,
};

/** Split a recipe document into one ordered step series per variable. */
export function recipeSeries(doc: RecipeDoc): StepSeries[] {
  const byVariable = new Map<string, StepPoint[]>();
  for (const [offset, variable, value] of doc.operations) {
    let points = byVariable.get(variable);
    if (!points) {
      points = [];
      byVariable.set(variable, points);
    }
    points.push({ t: offset, value });
  }
  return [...byVariable.entries()].map(([variable, points]) => ({ variable, points }));
}

export function recipeDuration(doc: RecipeDoc): number {
  return doc.operations.reduce((max, [offset]) => Math.max(max, offset), 0);
}

/**
 * The value a series holds at time t: the latest step at or before t, or
 * null before the first step. Mirrors the scheduler's hold semantics.
 */
export function valueAt(series: StepSeries, t: number): number | null {
  let current: number | null = null;
  for (const point of series.points) {
    if (point.t > t) break;
    current = point.value;
  }
  return current;
}

export function toUnit(tSeconds: number, unit: TimeUnit): number {
  return tSeconds / UNIT_SECONDS[unit];
}

/** Pick the axis unit that keeps labels in a readable 0..96 range. */
export function naturalUnit(durationS: number): TimeUnit {
  if (durationS >= 2 * 86400) return "days";
  if (durationS >= 2 * 3600) return "hours";
  return "seconds";
}

export interface AxisTick {
  t: number;
  label: string;
}

export function axisTicks(durationS: number, unit: TimeUnit, count = 6): AxisTick[] {
  if (durationS <= 0) {
    return [{ t: 0, label: `0 ${unit}` }];
  }
  const ticks: AxisTick[] = [];
  for (let i = 0; i <= count; i++) {
    const t = (durationS * i) / count;
    const scaled = toUnit(t, unit);
    const label = `${Number(scaled.toFixed(scaled < 10 ? 1 : 0))} ${unit}`;
    ticks.push({ t, label });
  }
  return ticks;
}

/**
 * SVG path for a step series: horizontal hold segments with vertical jumps,
 * extended from the first step through `durationS`.
 */
export function stepPath(
  series: StepSeries,
  xOf: (t: number) => number,
  yOf: (value: number) => number,
  durationS: number,
): string {
  const points = series.points;
  if (points.length === 0) return "";
  const first = points[0]!;
  const parts = [`M ${xOf(first.t)} ${yOf(first.value)}`];
  for (let i = 1; i < points.length; i++) {
    const point = points[i]!;
    parts.push(`H ${xOf(point.t)}`);
    parts.push(`V ${yOf(point.value)}`);
  }
  const last = points[points.length - 1]!;
  if (durationS > last.t) {
    parts.push(`H ${xOf(durationS)}`);
  }
  return parts.join(" ");
}
