/**
 * Live-dashboard state: a pure model fed by poll outcomes. The browser layer
 * calls beginPoll/pollSucceeded/pollFailed around each GET /state and renders
 * from the returned model; mutations requested while a poll is in flight are
 * queued and released at poll completion so they never race a stale render.
 */

import type { StateView } from "./api.js";

export interface HistorySample {
  t: number;
  measured: number | null;
  desired: number | null;
}

export interface DashboardModel {
  view: StateView | null;
  lastSuccessMs: number | null;
  stale: boolean;
  pollInFlight: boolean;
  queuedMutations: string[];
  history: Record<string, HistorySample[]>;
  windowSamples: number;
}

export function newModel(windowSamples = 720): DashboardModel {
  return {
    view: null,
    lastSuccessMs: null,
    stale: false,
    pollInFlight: false,
    queuedMutations: [],
    history: {},
    windowSamples,
  };
}

/** At most one poll in flight: starting while busy is a no-op. */
export function beginPoll(model: DashboardModel): DashboardModel {
  if (model.pollInFlight) return model;
  return { ...model, pollInFlight: true };
}

export function pollSucceeded(
  model: DashboardModel,
  view: StateView,
  nowMs: number,
): DashboardModel {
  const history = { ...model.history };
  const variables = new Set([
    ...Object.keys(view.sensed),
    ...Object.keys(view.desired),
  ]);
  for (const variable of variables) {
    const samples = [...(history[variable] ?? [])];
    samples.push({
      t: view.sim_time,
      measured: view.sensed[variable] ?? null,
      desired: view.desired[variable] ?? null,
    });
    if (samples.length > model.windowSamples) {
      samples.splice(0, samples.length - model.windowSamples);
    }
    history[variable] = samples;
  }
  return {
    ...model,
    view,
    history,
    lastSuccessMs: nowMs,
    stale: false,
    pollInFlight: false,
  };
}

/** A failed poll keeps the last good data and flags it as stale. */
export function pollFailed(model: DashboardModel): DashboardModel {
  return { ...model, stale: true, pollInFlight: false };
}

/** Seconds since the last successful poll, for the stale indicator. */
export function staleForSeconds(model: DashboardModel, nowMs: number): number | null {
  if (!model.stale || model.lastSuccessMs === null) return null;
  return Math.max(0, Math.round((nowMs - model.lastSuccessMs) / 1000));
}

/** Recipe progress in percent; 100 exactly when the API reports phase ended. */
export function progressPercent(view: StateView | null): number | null {
  if (!view || view.progress === null) return null;
  return Math.min(view.progress, 1) * 100;
}

export function enqueueMutation(model: DashboardModel, id: string): DashboardModel {
  return { ...model, queuedMutations: [...model.queuedMutations, id] };
}

/** Mutations run only between polls; drained in submission order. */
export function takeReadyMutations(
  model: DashboardModel,
): { model: DashboardModel; ready: string[] } {
  if (model.pollInFlight || model.queuedMutations.length === 0) {
    return { model, ready: [] };
  }
  return { model: { ...model, queuedMutations: [] }, ready: model.queuedMutations };
}
