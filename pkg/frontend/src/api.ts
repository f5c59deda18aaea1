/**
 * Typed client for the operator API. Every request goes through the ROUTES
 * table below, which the contract test checks against the served OpenAPI
 * description; nothing else in the dashboard touches fetch.
 */

export interface Route {
  method: "GET" | "POST" | "PATCH";
  path: string;
}

export const ROUTES = {
  health: { method: "GET", path: "/health" },
  state: { method: "GET", path: "/state" },
  telemetry: { method: "GET", path: "/telemetry" },
  telemetryCsv: { method: "GET", path: "/telemetry.csv" },
  postRecipe: { method: "POST", path: "/recipes" },
  listRecipes: { method: "GET", path: "/recipes" },
  getRecipe: { method: "GET", path: "/recipes/{id}" },
  startRun: { method: "POST", path: "/runs" },
  abortRun: { method: "POST", path: "/runs/current/abort" },
  actuate: { method: "POST", path: "/actuate" },
  getConfig: { method: "GET", path: "/config" },
  patchConfig: { method: "PATCH", path: "/config" },
} as const satisfies Record<string, Route>;

export interface StateView {
  phase: "idle" | "running" | "ended" | "aborted";
  run_id: string | null;
  elapsed: number | null;
  recipe_duration: number | null;
  progress: number | null;
  holding: boolean;
  sim_time: number;
  sensed: Record<string, number | null>;
  desired: Record<string, number>;
  actuators: Record<string, unknown>;
  actuation_log: {
    sim_time: number;
    effect: string;
    magnitude: number;
    duration_s: number | null;
    override: boolean;
  }[];
}

export interface RecipeSummary {
  id: string;
  revision: number;
  operations: number;
  duration: number;
}

export interface ApiResult<T> {
  status: number;
  ok: boolean;
  body: T;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  [extra: string]: unknown;
}

export interface ActuateRequest {
  effect: string;
  magnitude: number;
  duration_s?: number;
  override?: boolean;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string = "",
    // bound wrapper: a bare `fetch` reference throws in browsers
    private readonly fetcher: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async request<T>(route: Route, options: {
    params?: Record<string, string>;
    query?: Record<string, string>;
    body?: unknown;
    raw?: boolean;
  } = {}): Promise<ApiResult<T>> {
    let path = route.path;
    for (const [key, value] of Object.entries(options.params ?? {})) {
      path = path.replace(`{${key}}`, encodeURIComponent(value));
    }
    const query = new URLSearchParams(options.query ?? {}).toString();
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    let body: string | undefined;
    if (options.body !== undefined) {
      headers["Content-Type"] = "application/json";
      body = typeof options.body === "string" ? options.body : JSON.stringify(options.body);
    }
    const response = await this.fetcher(
      `${this.baseUrl}${path}${query ? `?${query}` : ""}`,
      { method: route.method, headers, body },
    );
    const payload = options.raw ? await response.text() : await response.json();
    return { status: response.status, ok: response.ok, body: payload as T };
  }

  health() {
    return this.request<{ status: string }>(ROUTES.health);
  }

  state() {
    return this.request<StateView>(ROUTES.state);
  }

  listRecipes() {
    return this.request<{ recipes: RecipeSummary[] }>(ROUTES.listRecipes);
  }

  getRecipe(id: string) {
    return this.request<Record<string, unknown>>(ROUTES.getRecipe, { params: { id } });
  }

  postRecipe(rawJson: string) {
    return this.request<{ id: string } & Partial<ApiErrorBody>>(ROUTES.postRecipe, {
      body: rawJson,
    });
  }

  startRun(recipeId: string, durationLimitS?: number) {
    const body: Record<string, unknown> = { recipe_id: recipeId };
    if (durationLimitS !== undefined) body["duration_limit_s"] = durationLimitS;
    return this.request<{ run_id: string } & Partial<ApiErrorBody>>(ROUTES.startRun, { body });
  }

  abortRun() {
    return this.request<{ aborted: string } & Partial<ApiErrorBody>>(ROUTES.abortRun, {
      body: {},
    });
  }

  actuate(req: ActuateRequest) {
    return this.request<Partial<ApiErrorBody> & { accepted?: boolean }>(ROUTES.actuate, {
      body: req,
    });
  }

  telemetry(query: Record<string, string>) {
    return this.request<{ run: string; points: unknown[] }>(ROUTES.telemetry, { query });
  }

  getConfig() {
    return this.request<Record<string, unknown>>(ROUTES.getConfig);
  }

  /** URL for the CSV download link (same route table, used by an <a href>). */
  telemetryCsvUrl(runId: string): string {
    return `${this.baseUrl}${ROUTES.telemetryCsv.path}?run=${encodeURIComponent(runId)}`;
  }
}
