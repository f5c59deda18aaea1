import { describe, expect, it } from "vitest";

import type { StateView } from "../src/api.js";
import {
  beginPoll,
  enqueueMutation,
  newModel,
  pollFailed,
  pollSucceeded,
  progressPercent,
  staleForSeconds,
  takeReadyMutations,
} from "../src/dashboard.js";

function view(overrides: Partial<StateView> = {}): StateView {
  return {
    phase: "running",
    run_id: "run-0001",
    elapsed: 43200,
    recipe_duration: 172800,
    progress: 0.25,
    holding: false,
    sim_time: 43200,
    sensed: { air_temperature: 24.9 },
    desired: { air_temperature: 25 },
    actuators: {},
    actuation_log: [],
    ...overrides,
  };
}

describe("polling model", () => {
  it("allows at most one in-flight poll", () => {
    let model = beginPoll(newModel());
    expect(model.pollInFlight).toBe(true);
    expect(beginPoll(model)).toBe(model);
  });

  it("a successful poll appends history and clears staleness", () => {
    let model = beginPoll(newModel());
    model = pollSucceeded(model, view(), 1000);
    expect(model.pollInFlight).toBe(false);
    expect(model.stale).toBe(false);
    expect(model.lastSuccessMs).toBe(1000);
    expect(model.history["air_temperature"]).toEqual([
      { t: 43200, measured: 24.9, desired: 25 },
    ]);
  });

  it("a failed poll keeps the last data and reports how stale it is", () => {
    let model = beginPoll(newModel());
    model = pollSucceeded(model, view(), 1000);
    model = pollFailed(beginPoll(model));
    expect(model.stale).toBe(true);
    expect(model.view?.run_id).toBe("run-0001");
    expect(staleForSeconds(model, 31000)).toBe(30);
    // recovery clears the indicator
    model = pollSucceeded(beginPoll(model), view(), 40000);
    expect(staleForSeconds(model, 41000)).toBeNull();
  });

  it("history is bounded by the window", () => {
    let model = newModel(3);
    for (let i = 0; i < 5; i++) {
      model = pollSucceeded(beginPoll(model), view({ sim_time: i * 10 }), i);
    }
    expect(model.history["air_temperature"]!.map((s) => s.t)).toEqual([20, 30, 40]);
  });
});

describe("progress", () => {
  it("tracks elapsed over duration and pins at 100% when ended", () => {
    expect(progressPercent(view({ progress: 0.25 }))).toBe(25);
    expect(progressPercent(view({ phase: "ended", progress: 1.0 }))).toBe(100);
    expect(progressPercent(view({ phase: "ended", progress: 1.0, holding: true }))).toBe(100);
    expect(progressPercent(view({ phase: "idle", progress: null }))).toBeNull();
    expect(progressPercent(null)).toBeNull();
  });
});

describe("mutation queue", () => {
  it("holds mutations while a poll is in flight, releases them after", () => {
    let model = beginPoll(newModel());
    model = enqueueMutation(model, "actuate-1");
    model = enqueueMutation(model, "start-run");
    expect(takeReadyMutations(model).ready).toEqual([]);
    model = pollSucceeded(model, view(), 0);
    const { model: drained, ready } = takeReadyMutations(model);
    expect(ready).toEqual(["actuate-1", "start-run"]);
    expect(takeReadyMutations(drained).ready).toEqual([]);
  });
});
