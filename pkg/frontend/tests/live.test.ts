/**
 * Integration against a real `openchamber serve` process: the dashboard's
 * own ApiClient drives the 409/override actuation flow during a live run and
 * cross-checks the timeline's hold semantics against GET /state.
 */

import { spawn, ChildProcess } from "node:child_process";
import { readFileSync } from "node:fs";
import { mkdtempSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, StateView } from "../src/api.js";
import { newSubmitModel, confirmOverride, startSubmit, submitResult } from "../src/actuation.js";
import { RecipeDoc, recipeSeries, valueAt } from "../src/timeline.js";

const repoRoot = fileURLToPath(new URL("../..", import.meta.url));
const sampleRaw = readFileSync(join(repoRoot, "data", "sample_recipe.json"), "utf-8");
const sample = JSON.parse(sampleRaw) as RecipeDoc;

let proc: ChildProcess;
let api: ApiClient;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = createServer();
    server.listen(0, "127.0.0.1", () => {
      const port = (server.address() as { port: number }).port;
      server.close(() => resolve(port));
    });
    server.on("error", reject);
  });
}

async function waitFor(predicate: () => Promise<boolean>, timeoutMs = 30000) {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      if (await predicate()) return;
    } catch {
      // keep waiting
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error("condition not reached in time");
}

beforeAll(async () => {
  const port = await freePort();
  const workdir = mkdtempSync(join(tmpdir(), "openchamber-ui-"));
  proc = spawn(
    "python3",
    ["-m", "openchamber.cli", "serve", "--port", String(port),
     "--store", join(workdir, "ui.store"), "--speed", "max"],
    {
      cwd: workdir,
      env: { ...process.env, PYTHONPATH: join(repoRoot, "src") },
      stdio: ["ignore", "ignore", "ignore"],
    },
  );
  api = new ApiClient(`http://127.0.0.1:${port}`);
  await waitFor(async () => (await api.health()).ok);
}, 40000);

afterAll(() => {
  proc?.kill();
});

describe("dashboard against a live chamber", () => {
  it("runs the 409/override actuation flow end to end", async () => {
    expect((await api.postRecipe(sampleRaw)).status).toBe(201);
    const started = await api.startRun(sample._id);
    expect(started.status).toBe(202);
    await waitFor(async () => (await api.state()).body.phase === "running");

    // submit without override: the API answers 409 and the dialog opens
    let model = startSubmit(newSubmitModel(), { effect: "dose_ph_up", magnitude: 20 });
    expect(model.phase).toBe("submitting");
    let result = await api.actuate(model.pending!);
    model = submitResult(model, result.status, result.body);
    expect(result.status).toBe(409);
    expect(model.phase).toBe("needs_override");

    // operator confirms: the same command goes through with override set
    const confirmed = confirmOverride(model)!;
    result = await api.actuate(confirmed.request);
    model = submitResult(confirmed.model, result.status, result.body);
    expect(result.status).toBe(202);
    expect(model.phase).toBe("accepted");

    // the dose shows up in the actuation log the dashboard displays
    await waitFor(async () => {
      const view = (await api.state()).body;
      return view.actuation_log.some(
        (e) => e.effect === "dose_ph_up" && e.magnitude === 20 && e.override,
      );
    });
  }, 30000);

  it("timeline hold values match the live desired setpoints", async () => {
    const doc = (await api.getRecipe(sample._id)).body as unknown as RecipeDoc;
    const series = recipeSeries(doc);
    const view: StateView = (await api.state()).body;
    expect(view.phase).toBe("running");
    for (const s of series) {
      const expected = valueAt(s, view.elapsed!);
      if (expected !== null) {
        expect(view.desired[s.variable]).toBe(expected);
      }
    }
  });

  it("progress reaches 100% exactly when the run phase is ended", async () => {
    // run to completion at max speed (48 simulated hours)
    await waitFor(async () => {
      const view = (await api.state()).body;
      return view.phase === "ended";
    }, 120000);
    const view = (await api.state()).body;
    expect(view.progress).toBe(1);
    expect(view.holding).toBe(true);

    const abort = await api.abortRun();
    expect(abort.status).toBe(200);
    await waitFor(async () => (await api.state()).body.phase === "idle");
  }, 150000);
});
