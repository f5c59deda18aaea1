/**
 * Manual actuation form logic: client-side magnitude validation mirroring
 * the effect domains, and the submit state machine including the 409 ->
 * override-confirmation path.
 */

import type { ActuateRequest, ApiErrorBody } from "./api.js";

export type EffectDomain = "fraction" | "volume_ml" | "switch";

export const EFFECT_DOMAINS: Record<string, EffectDomain> = {
  heat: "fraction",
  cool: "fraction",
  humidify: "fraction",
  vent: "switch",
  illuminate_red: "fraction",
  illuminate_blue: "fraction",
  illuminate_white: "fraction",
  circulate: "switch",
  dose_ph_up: "volume_ml",
  dose_ph_down: "volume_ml",
  dose_nutrient_a: "volume_ml",
  dose_nutrient_b: "volume_ml",
  add_fresh_water: "volume_ml",
  aerate: "switch",
};

export const EFFECTS = Object.keys(EFFECT_DOMAINS);

/** null when valid, else a message explaining the domain violation. */
export function validateMagnitude(effect: string, magnitude: number): string | null {
  const domain = EFFECT_DOMAINS[effect];
  if (!domain) return `unknown effect ${effect}`;
  if (!Number.isFinite(magnitude)) return "magnitude must be a number";
  switch (domain) {
    case "fraction":
      return magnitude >= 0 && magnitude <= 1 ? null : "fraction must be between 0 and 1";
    case "volume_ml":
      return magnitude >= 0 ? null : "volume must be non-negative";
    case "switch":
      return magnitude === 0 || magnitude === 1 ? null : "switch must be 0 or 1";
  }
}

export type SubmitPhase =
  | "idle"
  | "invalid"
  | "submitting"
  | "needs_override"
  | "accepted"
  | "failed";

export interface SubmitModel {
  phase: SubmitPhase;
  pending: ActuateRequest | null;
  message: string;
}

export function newSubmitModel(): SubmitModel {
  return { phase: "idle", pending: null, message: "" };
}

/** Validation gate: invalid requests never reach the network. */
export function startSubmit(model: SubmitModel, request: ActuateRequest): SubmitModel {
  const problem = validateMagnitude(request.effect, request.magnitude);
  if (problem) {
    return { phase: "invalid", pending: null, message: problem };
  }
  if (request.duration_s !== undefined &&
      (!Number.isInteger(request.duration_s) || request.duration_s <= 0)) {
    return { phase: "invalid", pending: null, message: "duration must be a positive integer" };
  }
  return { phase: "submitting", pending: request, message: "" };
}

/** Feed the HTTP outcome back; a 409 run conflict opens the override dialog. */
export function submitResult(
  model: SubmitModel,
  status: number,
  body: Partial<ApiErrorBody>,
): SubmitModel {
  if (model.phase !== "submitting") return model;
  if (status === 202) {
    return { phase: "accepted", pending: null, message: "command accepted" };
  }
  if (status === 409) {
    return {
      phase: "needs_override",
      pending: model.pending,
      message: body.message ?? "a recipe run is active",
    };
  }
  return {
    phase: "failed",
    pending: null,
    message: `${body.code ?? status}: ${body.message ?? "request failed"}`,
  };
}

/** The operator confirmed: resubmit the same command with override set. */
export function confirmOverride(
  model: SubmitModel,
): { model: SubmitModel; request: ActuateRequest } | null {
  if (model.phase !== "needs_override" || !model.pending) return null;
  const request = { ...model.pending, override: true };
  return { model: { phase: "submitting", pending: request, message: "" }, request };
}

export function cancelOverride(model: SubmitModel): SubmitModel {
  if (model.phase !== "needs_override") return model;
  return { phase: "idle", pending: null, message: "command cancelled" };
}
