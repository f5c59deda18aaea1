/**
 * DOM bootstrap: wires the pure models to the page. Configuration arrives
 * as a single JSON blob served by the API process at ./config.json.
 */

import { ApiClient, StateView } from "./api.js";
import {
  EFFECTS,
  cancelOverride,
  confirmOverride,
  newSubmitModel,
  startSubmit,
  submitResult,
  SubmitModel,
} from "./actuation.js";
import { BookmarkStore } from "./bookmarks.js";
import { renderCompareChart, renderTimelineChart } from "./charts.js";
import {
  DashboardModel,
  beginPoll,
  newModel,
  pollFailed,
  pollSucceeded,
  progressPercent,
  staleForSeconds,
} from "./dashboard.js";
import {
  RecipeDoc,
  TimeUnit,
  naturalUnit,
  recipeDuration,
  recipeSeries,
} from "./timeline.js";

interface UiConfig {
  api_base: string;
  token: string;
  poll_interval_s: number;
}

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

async function loadConfig(): Promise<UiConfig> {
  try {
    const response = await fetch("./config.json");
    return (await response.json()) as UiConfig;
  } catch {
    return { api_base: "", token: "", poll_interval_s: 1 };
  }
}

function fmt(value: number | null | undefined, digits = 1): string {
  return value === null || value === undefined ? "–" : value.toFixed(digits);
}

async function start() {
  const config = await loadConfig();
  const api = new ApiClient(config.api_base, config.token);
  const bookmarks = new BookmarkStore(window.localStorage);

  let model: DashboardModel = newModel();
  let submit: SubmitModel = newSubmitModel();
  let selectedRecipe: RecipeDoc | null = null;
  let timelineUnit: TimeUnit = "hours";
  const pending: (() => Promise<void>)[] = [];

  // -- actuation form ------------------------------------------------------

  const effectSelect = $<HTMLSelectElement>("effect");
  for (const effect of EFFECTS) {
    const option = document.createElement("option");
    option.value = effect;
    option.textContent = effect;
    effectSelect.append(option);
  }

  function renderSubmit() {
    $("actuate-status").textContent = submit.message;
    $("actuate-status").dataset["phase"] = submit.phase;
    $<HTMLDialogElement>("override-dialog").open = submit.phase === "needs_override";
  }

  async function send(request: Parameters<typeof api.actuate>[0]) {
    const result = await api.actuate(request);
    submit = submitResult(submit, result.status, result.body);
    renderSubmit();
  }

  $("actuate-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const request = {
      effect: effectSelect.value,
      magnitude: Number($<HTMLInputElement>("magnitude").value),
      ...($<HTMLInputElement>("duration").value
        ? { duration_s: Number($<HTMLInputElement>("duration").value) }
        : {}),
    };
    submit = startSubmit(submit, request);
    renderSubmit();
    if (submit.phase === "submitting") {
      enqueue(() => send(submit.pending!));
    }
  });

  $("override-yes").addEventListener("click", () => {
    const confirmed = confirmOverride(submit);
    if (confirmed) {
      submit = confirmed.model;
      renderSubmit();
      enqueue(() => send(confirmed.request));
    }
  });
  $("override-no").addEventListener("click", () => {
    submit = cancelOverride(submit);
    renderSubmit();
  });

  // -- recipe panel ----------------------------------------------------------

  async function refreshRecipeList() {
    const result = await api.listRecipes();
    if (!result.ok) return;
    const select = $<HTMLSelectElement>("recipe-select");
    const current = select.value;
    select.innerHTML = "";
    for (const recipe of result.body.recipes) {
      const option = document.createElement("option");
      option.value = recipe.id;
      option.textContent = `${recipe.id} (${recipe.operations} steps, ${Math.round(recipe.duration / 3600)} h)`;
      select.append(option);
    }
    if (current) select.value = current;
  }

  async function showRecipe(id: string) {
    const result = await api.getRecipe(id);
    if (!result.ok) return;
    selectedRecipe = result.body as unknown as RecipeDoc;
    timelineUnit = naturalUnit(recipeDuration(selectedRecipe));
    $<HTMLSelectElement>("unit-select").value = timelineUnit;
    renderTimeline();
  }

  function renderTimeline() {
    if (!selectedRecipe) return;
    const duration = recipeDuration(selectedRecipe);
    $("timeline-chart").innerHTML = renderTimelineChart(
      recipeSeries(selectedRecipe),
      duration,
      timelineUnit,
      bookmarks.list(selectedRecipe._id),
    );
    const list = $("bookmark-list");
    list.innerHTML = "";
    for (const bm of bookmarks.list(selectedRecipe._id)) {
      const item = document.createElement("li");
      item.textContent = `${bm.label} @ ${bm.t} s `;
      const remove = document.createElement("button");
      remove.textContent = "×";
      remove.addEventListener("click", () => {
        bookmarks.remove(selectedRecipe!._id, bm.t);
        renderTimeline();
      });
      item.append(remove);
      list.append(item);
    }
  }

  $("recipe-select").addEventListener("change", (event) => {
    void showRecipe((event.target as HTMLSelectElement).value);
  });
  $("unit-select").addEventListener("change", (event) => {
    timelineUnit = (event.target as HTMLSelectElement).value as TimeUnit;
    renderTimeline();
  });
  $("bookmark-form").addEventListener("submit", (event) => {
    event.preventDefault();
    if (!selectedRecipe) return;
    const t = Number($<HTMLInputElement>("bookmark-t").value);
    const label = $<HTMLInputElement>("bookmark-label").value || `t=${t}`;
    if (Number.isFinite(t) && t >= 0) {
      bookmarks.add(selectedRecipe._id, { t, label });
      renderTimeline();
    }
  });

  $("upload-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const raw = $<HTMLTextAreaElement>("recipe-json").value;
    enqueue(async () => {
      const result = await api.postRecipe(raw);
      $("upload-status").textContent = result.ok
        ? `stored ${(result.body as { id: string }).id}`
        : `${result.body.code}: ${result.body.message}`;
      await refreshRecipeList();
    });
  });

  $("start-run").addEventListener("click", () => {
    const id = $<HTMLSelectElement>("recipe-select").value;
    if (!id) return;
    enqueue(async () => {
      const result = await api.startRun(id);
      $("run-status").textContent = result.ok
        ? `started ${(result.body as { run_id: string }).run_id}`
        : `${result.body.code}: ${result.body.message}`;
    });
  });
  $("abort-run").addEventListener("click", () => {
    enqueue(async () => {
      const result = await api.abortRun();
      $("run-status").textContent = result.ok
        ? `aborted ${(result.body as { aborted: string }).aborted}`
        : `${result.body.code}: ${result.body.message}`;
    });
  });

  // -- polling loop -------------------------------------------------------------

  function enqueue(action: () => Promise<void>) {
    // mutations wait for the in-flight poll so they never race a stale view
    pending.push(action);
    void runPending();
  }

  async function poll() {
    if (model.pollInFlight) return;
    model = beginPoll(model);
    try {
      const result = await api.state();
      if (!result.ok) throw new Error(String(result.status));
      model = pollSucceeded(model, result.body, Date.now());
    } catch {
      model = pollFailed(model);
    }
    renderState();
    await runPending();
  }

  async function runPending() {
    while (pending.length > 0 && !model.pollInFlight) {
      const action = pending.shift()!;
      try {
        await action();
      } catch (error) {
        console.error("mutation failed", error);
      }
    }
  }

  function renderState() {
    const view = model.view;
    $("phase").textContent = view ? view.phase + (view.holding ? " (holding)" : "") : "–";
    $("run-id").textContent = view?.run_id ?? "–";
    $("sim-time").textContent = view ? `${view.sim_time} s` : "–";
    const progress = progressPercent(view);
    $<HTMLProgressElement>("progress").value = progress ?? 0;
    $("progress-label").textContent = progress === null ? "no run" : `${progress.toFixed(1)} %`;
    const stale = staleForSeconds(model, Date.now());
    const indicator = $("stale");
    if (stale === null) {
      indicator.textContent = "live";
      indicator.className = "live";
    } else {
      indicator.textContent = `stale ${stale}s (last data ${new Date(model.lastSuccessMs!).toLocaleTimeString()})`;
      indicator.className = "stale";
    }
    if (view) {
      const rows = Object.entries(view.sensed).map(([variable, value]) =>
        `<tr><td>${variable}</td><td>${fmt(value, 2)}</td>` +
        `<td>${fmt(view.desired[variable] ?? null, 2)}</td></tr>`);
      $("sensed-table").innerHTML =
        "<tr><th>variable</th><th>measured</th><th>desired</th></tr>" + rows.join("");
      const charts = $("live-charts");
      charts.innerHTML = "";
      for (const [variable, samples] of Object.entries(model.history)) {
        if (!samples.some((s) => s.desired !== null)) continue;
        const card = document.createElement("figure");
        card.innerHTML =
          `<figcaption>${variable}</figcaption>` +
          renderCompareChart(variable, samples, "seconds");
        charts.append(card);
      }
      const csv = $<HTMLAnchorElement>("csv-link");
      if (view.run_id) {
        csv.href = api.telemetryCsvUrl(view.run_id);
        csv.classList.remove("disabled");
      } else {
        csv.classList.add("disabled");
      }
    }
  }

  await refreshRecipeList();
  const first = $<HTMLSelectElement>("recipe-select").value;
  if (first) await showRecipe(first);
  await poll();
  window.setInterval(() => void poll(), Math.max(config.poll_interval_s, 1) * 1000);
}

void start();
