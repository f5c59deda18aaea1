"""Operator-facing REST API bridging the UI and CLI to the control stack.

All bodies are JSON (CSV for the export passthrough). Typed failures from
the underlying modules surface with their own error codes — a rejected
recipe answers with the parser's exact error code and the offending
operation index, never a generic failure.

GET routes are side-effect free and safe to poll; mutations validate
synchronously and take effect at the next control tick.
"""

from __future__ import annotations

import json
import mimetypes
import os
from dataclasses import asdict, dataclass, fields, replace

from . import __version__
from .control import ControllerConfig, VariableControl
from .httpserver import (HttpApp, HttpError, Request, Response, ServerHandle,
                         error_response, json_response, serve_app)
from .recipe import RecipeError, parse_recipe, serialize_recipe
from .runtime import StateConflict, Supervisor
from .store import DocumentStore, export_csv, iter_run_points, UnknownRun
from .variables import VARIABLE_ORDER

# Every error code an endpoint may answer with.
ERROR_CODES = (
    "bad_request", "unauthorized", "not_found", "method_not_allowed",
    "internal_error", "malformed_json", "unknown_format", "empty_operations",
    "unsorted_offsets", "unknown_variable", "value_out_of_range",
    "duplicate_setpoint", "unknown_recipe", "unknown_run", "run_active",
    "no_active_run", "invalid_effect", "invalid_config",
)


@dataclass(frozen=True, slots=True)
class ApiError:
    status: int
    code: str
    message: str

    def response(self, **extra) -> Response:
        return error_response(self.status, self.code, self.message, **extra)


class OperatorApi:
    """Route handlers over one supervisor and its document store."""

    def __init__(self, supervisor: Supervisor, store: DocumentStore,
                 *, token: str | None = None, ui_dir: str | None = None,
                 cors_origin: str = "*"):
        self.supervisor = supervisor
        self.store = store
        self.token = token
        self.ui_dir = ui_dir
        self.cors_origin = cors_origin

    def build_app(self) -> HttpApp:
        app = HttpApp(token=self.token, cors_origin=self.cors_origin,
                      open_paths=("/health", "/openapi.json"))
        for method, pattern, handler in [
            ("GET", "/health", self.health),
            ("GET", "/state", self.state),
            ("GET", "/telemetry", self.telemetry),
            ("GET", "/telemetry.csv", self.telemetry_csv),
            ("POST", "/recipes", self.post_recipe),
            ("GET", "/recipes", self.list_recipes),
            ("GET", "/recipes/{recipe_id}", self.get_recipe),
            ("POST", "/runs", self.start_run),
            ("POST", "/runs/current/abort", self.abort_run),
            ("POST", "/actuate", self.actuate),
            ("GET", "/config", self.get_config),
            ("PATCH", "/config", self.patch_config),
            ("GET", "/openapi.json", self.openapi),
            ("GET", "/ui", self.ui_index),
            ("GET", "/ui/{asset}", self.ui_asset),
        ]:
            app.add(method, pattern, handler)
        # UI asset paths are static files; let them through without the token.
        app.open_paths = app.open_paths + ("/ui",)
        original = app._authorized

        def authorized(request: Request) -> bool:
            if request.path.startswith("/ui/") and request.path != "/ui/config.json":
                return True
            return original(request)

        app._authorized = authorized
        return app

    # -- telemetry and state ----------------------------------------------

    def health(self, request: Request) -> Response:
        return json_response({"status": "ok", "version": __version__})

    def state(self, request: Request) -> Response:
        return json_response(self.supervisor.state_view())

    def _resolve_run(self, request: Request) -> str:
        run_id = request.query.get("run") or self.supervisor.current_run_id()
        if not run_id:
            raise HttpError(400, "bad_request", "no run parameter and no current run")
        return run_id

    def telemetry(self, request: Request) -> Response:
        run_id = self._resolve_run(request)
        try:
            points = iter_run_points(self.store, run_id)
        except UnknownRun:
            return ApiError(404, "unknown_run", f"no run {run_id!r}").response()
        t_from = _int_param(request, "from")
        t_to = _int_param(request, "to")
        variables = request.query.get("var")
        wanted = set(variables.split(",")) if variables else None
        out = []
        for p in points:
            if t_from is not None and p.timestamp < t_from:
                continue
            if t_to is not None and p.timestamp > t_to:
                continue
            if wanted is not None and p.variable not in wanted:
                continue
            out.append({"timestamp": p.timestamp, "variable": p.variable,
                        "value": p.value, "stream": p.stream})
        return json_response({"run": run_id, "points": out})

    def telemetry_csv(self, request: Request) -> Response:
        run_id = self._resolve_run(request)
        try:
            data = export_csv(self.store, run_id)
        except UnknownRun:
            return ApiError(404, "unknown_run", f"no run {run_id!r}").response()
        return Response(200, data, content_type="text/csv")

    # -- recipes ------------------------------------------------------------

    def post_recipe(self, request: Request) -> Response:
        try:
            recipe = parse_recipe(request.body)
        except RecipeError as exc:
            return error_response(400, exc.code, str(exc), index=exc.index)
        document = json.loads(serialize_recipe(recipe))
        revision = self.store.put(recipe.id, "recipe", document)
        return json_response({"id": recipe.id, "revision": revision,
                              "duration": recipe.duration}, status=201)

    def list_recipes(self, request: Request) -> Response:
        recipes = []
        for doc in self.store.documents(kinds=("recipe",)):
            ops = doc.body.get("operations", [])
            recipes.append({
                "id": doc.id,
                "revision": doc.revision,
                "operations": len(ops),
                "duration": max((op[0] for op in ops), default=0),
            })
        recipes.sort(key=lambda r: r["id"])
        return json_response({"recipes": recipes})

    def get_recipe(self, request: Request, recipe_id: str) -> Response:
        doc = self.store.get(recipe_id)
        if doc is None or doc.kind != "recipe" or doc.deleted:
            return ApiError(404, "unknown_recipe", f"no recipe {recipe_id!r}").response()
        return json_response(doc.body)

    # -- runs and actuation --------------------------------------------------

    def start_run(self, request: Request) -> Response:
        body = request.json()
        recipe_id = body.get("recipe_id")
        if not isinstance(recipe_id, str) or not recipe_id:
            raise HttpError(400, "bad_request", "recipe_id must be a non-empty string")
        doc = self.store.get(recipe_id)
        if doc is None or doc.kind != "recipe" or doc.deleted:
            return ApiError(404, "unknown_recipe", f"no recipe {recipe_id!r}").response()
        recipe = parse_recipe(json.dumps(doc.body))
        limit = body.get("duration_limit_s")
        if limit is not None and (not isinstance(limit, int) or limit < 0):
            raise HttpError(400, "bad_request", "duration_limit_s must be a non-negative integer")
        try:
            run_id = self.supervisor.start_run(recipe, limit)
        except StateConflict as exc:
            return error_response(409, exc.code, str(exc))
        return json_response({"run_id": run_id}, status=202)

    def abort_run(self, request: Request) -> Response:
        try:
            run_id = self.supervisor.abort_run()
        except StateConflict as exc:
            return error_response(409, exc.code, str(exc))
        return json_response({"aborted": run_id})

    def actuate(self, request: Request) -> Response:
        body = request.json()
        effect = body.get("effect")
        magnitude = body.get("magnitude")
        duration = body.get("duration_s")
        if not isinstance(effect, str) or not isinstance(magnitude, (int, float)) \
                or isinstance(magnitude, bool):
            raise HttpError(400, "bad_request", "effect (string) and magnitude (number) are required")
        if duration is not None and (not isinstance(duration, int) or duration <= 0):
            raise HttpError(400, "bad_request", "duration_s must be a positive integer")
        try:
            self.supervisor.actuate(effect, magnitude, duration,
                                    override=bool(body.get("override", False)))
        except ValueError as exc:
            return error_response(400, "invalid_effect", str(exc))
        except StateConflict as exc:
            return error_response(409, exc.code, str(exc))
        return json_response({"accepted": True}, status=202)

    # -- configuration ---------------------------------------------------------

    def get_config(self, request: Request) -> Response:
        return json_response(_config_view(self.supervisor.config))

    def patch_config(self, request: Request) -> Response:
        body = request.json()
        try:
            config = _merge_config(self.supervisor.config, body)
        except (ValueError, TypeError, KeyError) as exc:
            return error_response(400, "invalid_config", str(exc))
        self.supervisor.update_config(config)
        return json_response(_config_view(config))

    # -- description and UI -----------------------------------------------------

    def openapi(self, request: Request) -> Response:
        return json_response(openapi_description())

    def ui_index(self, request: Request) -> Response:
        return self.ui_asset(request, "index.html")

    def ui_asset(self, request: Request, asset: str) -> Response:
        if asset == "config.json":
            return json_response({"api_base": "", "token": self.token or "",
                                  "poll_interval_s": 1})
        if not self.ui_dir:
            return ApiError(404, "not_found",
                            "no dashboard bundle configured (build frontend/ and pass --ui)").response()
        root = os.path.abspath(self.ui_dir)
        path = os.path.abspath(os.path.join(root, asset))
        if os.path.commonpath([root, path]) != root or not os.path.isfile(path):
            return ApiError(404, "not_found", f"no asset {asset!r}").response()
        ctype = mimetypes.guess_type(path)[0] or "application/octet-stream"
        with open(path, "rb") as f:
            return Response(200, f.read(), content_type=ctype)


def _int_param(request: Request, name: str) -> int | None:
    raw = request.query.get(name)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise HttpError(400, "bad_request", f"{name} must be an integer") from exc


def _config_view(config: ControllerConfig) -> dict:
    return {
        "period_s": config.period_s,
        "post_recipe": config.post_recipe,
        "light_full_scale_lux": config.light_full_scale_lux,
        "variables": {var: asdict(vc) for var, vc in sorted(config.variables.items())},
    }


_TOP_CONFIG_FIELDS = ("period_s", "post_recipe", "light_full_scale_lux")


def _merge_config(config: ControllerConfig, patch: dict) -> ControllerConfig:
    if not isinstance(patch, dict):
        raise ValueError("config patch must be an object")
    unknown = set(patch) - set(_TOP_CONFIG_FIELDS) - {"variables"}
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    top = {k: patch[k] for k in _TOP_CONFIG_FIELDS if k in patch}
    variables = dict(config.variables)
    for var, sub in (patch.get("variables") or {}).items():
        if var not in VARIABLE_ORDER:
            raise ValueError(f"unknown variable {var!r}")
        if not isinstance(sub, dict):
            raise ValueError(f"{var}: per-variable patch must be an object")
        current = variables.get(var, VariableControl())
        unknown = set(sub) - {f.name for f in fields(current)}
        if unknown:
            raise ValueError(f"{var}: unknown controller fields {sorted(unknown)}")
        variables[var] = replace(current, **sub)
    return replace(config, variables=variables, **top)


def openapi_description() -> dict:
    """The API contract served at /openapi.json (a copy ships in docs/)."""
    def op(summary, **kw):
        return {"summary": summary, **kw}

    return {
        "openapi": "3.0.3",
        "info": {"title": "openchamber operator API", "version": __version__},
        "x-error-codes": list(ERROR_CODES),
        "paths": {
            "/health": {"get": op("liveness probe")},
            "/state": {"get": op("latest sensed values, active setpoints, run phase")},
            "/telemetry": {"get": op("query stored data points",
                                     parameters=["run", "from", "to", "var"])},
            "/telemetry.csv": {"get": op("CSV export of one run", parameters=["run"])},
            "/recipes": {"post": op("validate and store a recipe document"),
                         "get": op("list stored recipes")},
            "/recipes/{id}": {"get": op("fetch one recipe document")},
            "/runs": {"post": op("start a recipe run",
                                 body=["recipe_id", "duration_limit_s"])},
            "/runs/current/abort": {"post": op("abort the active run")},
            "/actuate": {"post": op("manually command one effect",
                                    body=["effect", "magnitude", "duration_s", "override"])},
            "/config": {"get": op("current controller configuration"),
                        "patch": op("update controller configuration fields")},
            "/openapi.json": {"get": op("this description")},
            "/ui": {"get": op("operator dashboard (static bundle)")},
            "/ui/{asset}": {"get": op("dashboard asset; config.json is synthesized")},
        },
    }


def serve_api(supervisor: Supervisor, store: DocumentStore, host: str = "127.0.0.1",
              port: int = 0, *, token: str | None = None, ui_dir: str | None = None,
              cors_origin: str = "*") -> ServerHandle:
    api = OperatorApi(supervisor, store, token=token, ui_dir=ui_dir,
                      cors_origin=cors_origin)
    return serve_app(api.build_app(), host, port)
