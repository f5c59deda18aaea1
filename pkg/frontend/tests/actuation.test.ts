import { describe, expect, it } from "vitest";

import {
  EFFECTS,
  cancelOverride,
  confirmOverride,
  newSubmitModel,
  startSubmit,
  submitResult,
  validateMagnitude,
} from "../src/actuation.js";

describe("magnitude validation", () => {
  it("accepts in-domain magnitudes for every effect", () => {
    expect(validateMagnitude("heat", 0.5)).toBeNull();
    expect(validateMagnitude("dose_ph_up", 20)).toBeNull();
    expect(validateMagnitude("vent", 1)).toBeNull();
    expect(validateMagnitude("aerate", 0)).toBeNull();
  });

  it("blocks out-of-domain magnitudes before any request is made", () => {
    expect(validateMagnitude("heat", 1.5)).toMatch(/fraction/);
    expect(validateMagnitude("dose_ph_up", -1)).toMatch(/volume/);
    expect(validateMagnitude("vent", 0.5)).toMatch(/switch/);
    expect(validateMagnitude("warp", 1)).toMatch(/unknown effect/);
    expect(validateMagnitude("heat", Number.NaN)).toMatch(/number/);
  });

  it("covers the full effect vocabulary", () => {
    expect(EFFECTS).toHaveLength(14);
    expect(EFFECTS).toContain("add_fresh_water");
  });
});

describe("submit state machine", () => {
  it("invalid input never leaves the form", () => {
    const model = startSubmit(newSubmitModel(), { effect: "heat", magnitude: 3 });
    expect(model.phase).toBe("invalid");
    expect(model.pending).toBeNull();
  });

  it("rejects non-integer durations", () => {
    const model = startSubmit(newSubmitModel(),
      { effect: "heat", magnitude: 0.5, duration_s: 1.5 });
    expect(model.phase).toBe("invalid");
  });

  it("a 202 acknowledges and resets", () => {
    let model = startSubmit(newSubmitModel(), { effect: "dose_ph_up", magnitude: 20 });
    expect(model.phase).toBe("submitting");
    model = submitResult(model, 202, { accepted: true } as never);
    expect(model.phase).toBe("accepted");
    expect(model.pending).toBeNull();
  });

  it("a 409 opens the override dialog and resubmits with override", () => {
    let model = startSubmit(newSubmitModel(), { effect: "dose_ph_up", magnitude: 20 });
    model = submitResult(model, 409, {
      code: "run_active", message: "a recipe controller is active",
    });
    expect(model.phase).toBe("needs_override");
    expect(model.message).toMatch(/active/);

    const confirmed = confirmOverride(model)!;
    expect(confirmed.request).toEqual({
      effect: "dose_ph_up", magnitude: 20, override: true,
    });
    expect(confirmed.model.phase).toBe("submitting");
    const done = submitResult(confirmed.model, 202, {} as never);
    expect(done.phase).toBe("accepted");
  });

  it("cancel backs out of the override dialog", () => {
    let model = startSubmit(newSubmitModel(), { effect: "heat", magnitude: 1 });
    model = submitResult(model, 409, { code: "run_active", message: "busy" });
    model = cancelOverride(model);
    expect(model.phase).toBe("idle");
    expect(model.pending).toBeNull();
  });

  it("other errors surface their typed code", () => {
    let model = startSubmit(newSubmitModel(), { effect: "heat", magnitude: 1 });
    model = submitResult(model, 400, { code: "invalid_effect", message: "nope" });
    expect(model.phase).toBe("failed");
    expect(model.message).toBe("invalid_effect: nope");
  });

  it("confirmOverride outside the dialog is a no-op", () => {
    expect(confirmOverride(newSubmitModel())).toBeNull();
  });
});
