"""Acceptance suite: one test per release criterion, at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v` to get one pass/fail line per
criterion. Each test also prints an `[acceptance]` line with the measured
numbers (visible with -s or in captured output).
"""

import json
import math
import os
import random
import subprocess
import sys
import time
import urllib.error
import urllib.request
from dataclasses import replace
from pathlib import Path

import pytest

from openchamber.chamber import (ALL_OFF, ActuatorBank, Chamber, PumpOrder,
                                 scenario_preset, step)
from openchamber.control import (ControllerConfig, ControlSession, EffectCommand,
                                 run_recipe, translate)
from openchamber.recipe import (Recipe, RecipeError, SetPoint, compile_recipe,
                                parse_recipe, serialize_recipe, setpoints_at)
from openchamber.store import DocumentStore
from openchamber.sync import HttpTransport, NetworkUnavailable, serve, sync
from openchamber.variables import VARIABLES, VARIABLE_ORDER

from tests.conftest import SAMPLE_DOC
from tests.test_chamber import _random_schedule, reference_integrate
from tests.test_sync import FlakyTransport

SRC_DIR = str(Path(__file__).resolve().parents[1] / "src")


def _announce(name, detail):
    print(f"[acceptance] {name}: PASS ({detail})")


# ---- 1. recipe semantics ----------------------------------------------------


def test_recipe_semantics_suite():
    started = time.monotonic()
    sample = json.dumps(SAMPLE_DOC).encode()
    recipe = parse_recipe(sample)
    assert recipe.id == "7ca3134e91aec96acd17a74764000bb8"
    assert len(recipe.operations) == 6
    assert recipe.duration == 172800

    timeline = compile_recipe(recipe)
    assert setpoints_at(timeline, 0) == (
        {"air_temperature": 25.0, "air_humidity": 25.0, "light_illuminance": 60.0}, False)
    assert setpoints_at(timeline, 50000) == (
        {"air_temperature": 23.0, "air_humidity": 25.0, "light_illuminance": 60.0}, False)
    assert setpoints_at(timeline, 172800) == (
        {"air_temperature": 23.0, "air_humidity": 20.0, "light_illuminance": 0.0}, True)

    rng = random.Random(0xC0FFEE)
    variables = list(VARIABLE_ORDER)
    checked = 0
    for _ in range(1000):
        entries = {}
        for _ in range(rng.randint(1, 40)):
            offset = rng.randrange(0, 10 ** 6)
            var = rng.choice(variables)
            d = VARIABLES[var]
            entries[(offset, var)] = d.min + rng.random() * (d.max - d.min)
        operations = tuple(SetPoint(off, var, value)
                           for (off, var), value in sorted(entries.items()))
        generated = Recipe(f"gen-{checked}", "simple", operations)
        # round trip
        assert parse_recipe(serialize_recipe(generated)) == generated
        timeline = compile_recipe(generated)
        assert timeline.duration == max(sp.offset for sp in operations)
        # duration law and hold semantics at sampled instants
        for _ in range(5):
            t1 = rng.randrange(0, 2 * 10 ** 6)
            t2 = t1 + rng.randrange(0, 5000)
            at1, ended1 = setpoints_at(timeline, t1)
            at2, _ = setpoints_at(timeline, t2)
            assert ended1 == (t1 >= timeline.duration)
            for var, value in at1.items():
                offsets = timeline.steps[var][0]
                if not any(t1 < off <= t2 for off in offsets):
                    assert at2[var] == value
        checked += 1
    elapsed = time.monotonic() - started
    assert elapsed < 10.0, f"recipe suite took {elapsed:.1f}s (budget 10s)"
    _announce("recipe semantics", f"{checked} generated recipes in {elapsed:.1f}s")


# ---- 2. parser robustness -----------------------------------------------------


def test_parser_robustness_fuzz():
    """60 seconds of adversarial inputs: no crash, typed rejections only."""
    rng = random.Random(0xF00D)
    valid = json.dumps(SAMPLE_DOC).encode()
    deadline = time.monotonic() + 60.0
    attempts = accepted = 0
    while time.monotonic() < deadline:
        mode = rng.randrange(4)
        if mode == 0:
            raw = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 200)))
        elif mode == 1:
            raw = bytearray(valid)
            for _ in range(rng.randrange(1, 8)):
                raw[rng.randrange(len(raw))] = rng.randrange(256)
            raw = bytes(raw)
        elif mode == 2:
            raw = json.dumps(_random_json(rng, depth=3)).encode()
        else:
            doc = json.loads(valid)
            ops = doc["operations"]
            for _ in range(rng.randrange(1, 4)):
                tweak = rng.randrange(5)
                i = rng.randrange(len(ops))
                if tweak == 0:
                    ops[i][0] = rng.choice([-1, 0.5, "soon", None, 2 ** 80])
                elif tweak == 1:
                    ops[i][1] = rng.choice(["vibes", 42, None, ""])
                elif tweak == 2:
                    ops[i][2] = rng.choice([1e30, -1e30, None, "hot", math.nan])
                elif tweak == 3:
                    ops.insert(i, ops[i])
                else:
                    doc["format"] = rng.choice(["simple", "fancy", 7, None])
            raw = json.dumps(doc).encode()
        attempts += 1
        try:
            parse_recipe(raw)
            accepted += 1
        except RecipeError:
            pass  # typed rejection is the only permitted failure
    assert attempts > 1000
    _announce("parser robustness", f"{attempts} fuzz inputs, {accepted} accepted, 0 crashes")


def _random_json(rng, depth):
    if depth == 0 or rng.random() < 0.3:
        return rng.choice([None, True, False, rng.randrange(-10 ** 9, 10 ** 9),
                           rng.random() * 1e6, "x" * rng.randrange(0, 10)])
    if rng.random() < 0.5:
        return [_random_json(rng, depth - 1) for _ in range(rng.randrange(0, 5))]
    return {f"k{i}": _random_json(rng, depth - 1) for i in range(rng.randrange(0, 5))}


# ---- 3. simulator consistency ---------------------------------------------------


def test_simulator_consistency():
    # equilibrium fixed point, exact
    state, params, _ = scenario_preset("default_desktop")
    out = step(state, ALL_OFF, params, 3600)
    assert out == replace(state, sim_time=3600)

    # grid refinement: halving the step moves 1 h trajectories < 0.1% of range
    bank = ActuatorBank(heater=0.6, humidifier=0.3, light_white=0.5, vent_open=True,
                        ph_up=PumpOrder(1.0, 5.0))
    coarse = fine = state
    coarse_params = replace(params, integration_step_s=2)
    worst = 0.0
    for _ in range(360):
        coarse = step(coarse, bank, coarse_params, 10)
        fine = step(fine, bank, params, 10)
        for var in VARIABLE_ORDER:
            span = VARIABLES[var].max - VARIABLES[var].min
            gap = abs(getattr(coarse, var) - getattr(fine, var)) / span
            worst = max(worst, gap)
            assert gap < 0.001, f"{var} deviates {gap:.2e} of range"

    # 24 h of random actuator schedules vs the independent reference integrator
    schedule = _random_schedule(seed=2024, total_s=86400, segment_s=300)
    current = state
    for seg_bank, seconds in schedule:
        current = step(current, seg_bank, params, seconds)
    reference = reference_integrate(state, schedule, params)
    worst_abs = max(abs(getattr(current, v) - reference[v]) for v in VARIABLE_ORDER)
    assert worst_abs < 1e-6
    _announce("simulator consistency",
              f"refinement max {worst:.2e} of range, integrator gap {worst_abs:.2e}")


# ---- 4. closed-loop convergence ---------------------------------------------------


def test_closed_loop_convergence():
    started = time.monotonic()
    recipe = parse_recipe(json.dumps(SAMPLE_DOC).encode())
    chamber = Chamber.from_preset("default_desktop")
    log = run_recipe(recipe, chamber, ControllerConfig(), 172800, rng_seed=7)
    wall = time.monotonic() - started
    assert wall < 60.0, f"48 h simulation took {wall:.1f}s (budget 60s)"

    measured, desired = {}, {}
    for p in log.points:
        if p.variable == "air_temperature":
            (measured if p.stream == "measured" else desired)[p.timestamp] = p.value
    ticks = [t for t in measured if t >= 3600]
    assert ticks and all(measured[t] is not None for t in ticks)
    in_band = sum(1 for t in ticks if abs(measured[t] - desired[t]) <= 0.5)
    share = in_band / len(ticks)
    assert share >= 0.90, f"only {share:.1%} of ticks within ±0.5 °C"
    # the setpoint step at 43200 s is tracked, not just the steady state
    assert abs(measured[46800] - 23.0) <= 0.5
    _announce("closed-loop convergence",
              f"{share:.2%} in band after hour one, {wall:.1f}s wall")


# ---- 5. CO2 warm-up fail-safe ------------------------------------------------------


def test_co2_warmup_failsafe():
    doc = {"_id": "co2", "format": "simple",
           "operations": [[0, "air_carbon_dioxide", 300]]}
    recipe = parse_recipe(json.dumps(doc).encode())
    chamber = Chamber.from_preset("default_desktop")
    session = ControlSession(recipe, chamber, ControllerConfig(),
                             duration_limit_s=600, rng_seed=3)
    vented_during_warmup = vented_after = 0
    while not session.finished:
        result = session.tick()
        if result.elapsed < 150:
            assert result.readings["air_carbon_dioxide"] is None
            assert result.bank.vent_open is False
            vented_during_warmup += result.bank.vent_open
        elif result.bank.vent_open:
            vented_after += 1
    assert vented_during_warmup == 0
    assert vented_after > 0  # the sensor coming online is what enables venting
    _announce("CO2 warm-up", f"0 vent commands in the first 150 s, "
                             f"{vented_after} after warm-up")


# ---- 6. replication suite -----------------------------------------------------------


def test_replication_suite(tmp_path):
    started = time.monotonic()
    server_store = DocumentStore(tmp_path / "cloud.store")
    recipes = [{"_id": f"srv-{i}", "format": "simple",
                "operations": [[0, "air_temperature", 20 + i % 5]]} for i in range(40)]
    server_store.put_many([dict(id=r["_id"], kind="recipe", body=r) for r in recipes])
    handle = serve(server_store, port=0)
    url = handle.url
    try:
        clients = {}
        total_docs = 0
        for name, docs in (("alpha", 3400), ("beta", 3400), ("gamma", 3300)):
            store = DocumentStore(tmp_path / f"{name}.store")
            writes = [dict(id=f"{name}-batch-{i}", kind="datapoint_batch",
                           body={"run_id": name, "points": [[i, "air_temperature",
                                                             float(i), "measured"]]})
                      for i in range(docs)]
            for chunk_start in range(0, docs, 500):
                store.put_many(writes[chunk_start:chunk_start + 500])
            clients[name] = (store, docs)
            total_docs += docs
        assert total_docs + len(recipes) >= 10 ** 4

        # alpha syncs under fault injection at every batch boundary, hitting
        # both crash windows (before and after the server checkpoint call)
        alpha_store, alpha_docs = clients["alpha"]
        inner = HttpTransport(url)
        resumes = 0
        for attempt in range(1000):
            flaky = FlakyTransport(inner, fail_after=2 + attempt % 2)
            try:
                sync(alpha_store, url, client_id="alpha", transport=flaky)
            except NetworkUnavailable:
                resumes += 1
                continue
            assert not flaky.tripped
            break
        else:
            pytest.fail("faulted sync never completed")
        assert resumes >= alpha_docs // 100  # no boundary went untested

        # beta and gamma sync cleanly and concurrently share the server
        for name in ("beta", "gamma"):
            store, _ = clients[name]
            report = sync(store, url, client_id=name)
            assert report.pushed == clients[name][1]
            assert report.pulled == len(recipes)

        for name, (store, docs) in clients.items():
            # superset: everything the client holds is on the server
            server_ids = {d.id for d in server_store.documents()}
            for doc in store.documents():
                assert f"{name}/{doc.id}" in server_ids or doc.id in server_ids
            # filter soundness: nothing but own batches and pulled recipes
            for doc in store.documents():
                assert doc.id.startswith(f"{name}-batch-") or doc.kind == "recipe"
            recipes_held = [d for d in store.documents(kinds=("recipe",))]
            assert {d.id for d in recipes_held} == {r["_id"] for r in recipes}
            # one-round convergence: an immediate re-sync is a no-op
            again = sync(store, url, client_id=name)
            assert again.pushed == 0 and again.pulled == 0

        # the server feed stayed gapless through interleaved pushes
        entries = server_store.changes_since(0)
        assert [e.seq for e in entries] == list(range(1, len(entries) + 1))
        pushed_ids = {d.id for d in server_store.documents()
                      if not d.id.startswith("srv-")}
        assert len(pushed_ids) == total_docs
        assert all(d.revision == 1 for d in server_store.documents())
        elapsed = time.monotonic() - started
        assert elapsed < 120.0, f"replication suite took {elapsed:.1f}s (budget 120s)"
        _announce("replication", f"{total_docs + len(recipes)} docs, 3 clients, "
                                 f"{resumes} injected faults, {elapsed:.1f}s")
    finally:
        handle.stop()
        server_store.close()
        for store, _ in clients.values():
            store.close()


# ---- 7. dosing translation -----------------------------------------------------------


def test_dosing_translation():
    bank, carry = translate([EffectCommand("dose_ph_up", 20.0)], {"ph_up": 10.0},
                            period_s=10)
    assert bank.ph_up == PumpOrder(10.0, 2.0)
    assert carry == {}

    rng = random.Random(31337)
    for _ in range(500):
        period = rng.randint(1, 60)
        flow = rng.uniform(0.1, 30.0)
        doses = [rng.uniform(0, 400) for _ in range(rng.randint(1, 25))]
        carry = {}
        delivered = 0.0
        for ml in doses:
            bank, carry = translate([EffectCommand("dose_nutrient_a", ml)],
                                    {"nutrient_a": flow}, period_s=period, carry=carry)
            assert 0.0 <= bank.nutrient_a.run_s <= period
            delivered += bank.nutrient_a.volume_ml(period)
        remaining = carry.get("nutrient_a", 0.0)
        assert delivered + remaining == pytest.approx(sum(doses), rel=1e-9)
    _announce("dosing translation", "20 ml -> 2 s exact; 500 random carry chains conserved")


# ---- 8. API contract against a live serve ----------------------------------------------


def _http(base, method, path, body=None, token=None, raw=False):
    data = json.dumps(body).encode() if isinstance(body, dict) else body
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    req = urllib.request.Request(base + path, data=data, method=method, headers=headers)
    try:
        with urllib.request.urlopen(req, timeout=30) as resp:
            payload = resp.read()
            return resp.status, payload if raw else json.loads(payload or b"{}")
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read() or b"{}")


def test_api_contract_against_live_serve(tmp_path):
    import socket
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    env = dict(os.environ)
    env["PYTHONPATH"] = SRC_DIR
    proc = subprocess.Popen(
        [sys.executable, "-m", "openchamber.cli", "serve", "--port", str(port),
         "--store", str(tmp_path / "serve.store"), "--speed", "max"],
        env=env, cwd=tmp_path, stderr=subprocess.DEVNULL)
    base = f"http://127.0.0.1:{port}"
    try:
        deadline = time.time() + 15
        while time.time() < deadline:
            try:
                status, _ = _http(base, "GET", "/health")
                if status == 200:
                    break
            except (urllib.error.URLError, ConnectionError, OSError):
                time.sleep(0.1)
        else:
            pytest.fail("serve did not come up")

        sample = json.dumps(SAMPLE_DOC).encode()
        # recipes: success and the full 400 taxonomy surface
        assert _http(base, "POST", "/recipes", sample)[0] == 201
        status, err = _http(base, "POST", "/recipes", b'{"_id":"x","format":"simple","operations":[]}')
        assert (status, err["code"]) == (400, "empty_operations")
        assert _http(base, "GET", "/recipes")[1]["recipes"][0]["id"] == SAMPLE_DOC["_id"]
        assert _http(base, "GET", f"/recipes/{SAMPLE_DOC['_id']}")[1] == SAMPLE_DOC
        assert _http(base, "GET", "/recipes/ghost")[0] == 404

        # runs: conflict, not-found, bad-body, then the real 48 h run
        assert _http(base, "POST", "/runs", {"recipe_id": "ghost"})[0] == 404
        assert _http(base, "POST", "/runs", {"recipe_id": 5})[0] == 400
        status, started_run = _http(base, "POST", "/runs", {"recipe_id": SAMPLE_DOC["_id"]})
        assert status == 202
        run_id = started_run["run_id"]
        assert _http(base, "POST", "/runs", {"recipe_id": SAMPLE_DOC["_id"]})[0] == 409

        # actuation: conflict without override, accepted with
        status, err = _http(base, "POST", "/actuate", {"effect": "dose_ph_up", "magnitude": 20})
        assert (status, err["code"]) == (409, "run_active")
        assert _http(base, "POST", "/actuate", {"effect": "dose_ph_up", "magnitude": 20,
                                                "override": True})[0] == 202
        assert _http(base, "POST", "/actuate", {"effect": "warp", "magnitude": 1})[0] == 400

        # config round trip
        status, cfg = _http(base, "GET", "/config")
        assert status == 200 and cfg["period_s"] == 10
        status, patched = _http(base, "PATCH", "/config",
                                {"variables": {"air_humidity": {"kp": 0.08}}})
        assert status == 200 and patched["variables"]["air_humidity"]["kp"] == 0.08
        assert _http(base, "PATCH", "/config", {"nope": 1})[0] == 400

        # state while running
        status, view = _http(base, "GET", "/state")
        assert status == 200 and view["phase"] in ("running", "ended")

        # wait out the 48 simulated hours at max speed
        deadline = time.time() + 90
        while time.time() < deadline:
            status, view = _http(base, "GET", "/state")
            if view["phase"] in ("ended", "idle"):
                break
            time.sleep(0.3)
        assert view["phase"] in ("ended", "idle"), "48 h run did not finish in time"

        # CSV export row count must match the tick arithmetic exactly
        ticks = 172800 // 10 + 1
        expected_rows = len(VARIABLE_ORDER) * 2 * ticks
        status, csvdata = _http(base, "GET", f"/telemetry.csv?run={run_id}", raw=True)
        assert status == 200
        rows = csvdata.decode().strip().split("\n")
        assert rows[0] == "timestamp,variable,value,stream"
        assert len(rows) - 1 == expected_rows

        status, tele = _http(base, "GET",
                             f"/telemetry?run={run_id}&var=air_temperature&from=43200&to=43200")
        assert status == 200 and len(tele["points"]) == 2
        desired_at_step = [p["value"] for p in tele["points"] if p["stream"] == "desired"]
        assert desired_at_step == [23.0]
        assert _http(base, "GET", "/telemetry?run=ghost")[0] == 404
        assert _http(base, "GET", "/telemetry.csv?run=ghost")[0] == 404

        # abort path on a fresh run
        assert _http(base, "POST", "/runs", {"recipe_id": SAMPLE_DOC["_id"]})[0] == 202
        assert _http(base, "POST", "/runs/current/abort")[0] == 200
        deadline = time.time() + 10
        while time.time() < deadline:
            if _http(base, "GET", "/state")[1]["phase"] == "idle":
                break
            time.sleep(0.1)
        assert _http(base, "POST", "/runs/current/abort")[0] == 409
        assert _http(base, "GET", "/openapi.json")[0] == 200
        _announce("api contract", f"{expected_rows} CSV rows from the 48 h run")
    finally:
        proc.terminate()
        proc.wait(timeout=10)


# ---- 9. CLI determinism ------------------------------------------------------------------


def test_simulate_determinism(tmp_path):
    recipe_path = tmp_path / "sample.json"
    recipe_path.write_text(json.dumps(SAMPLE_DOC))
    env = dict(os.environ)
    env["PYTHONPATH"] = SRC_DIR
    outputs = []
    for name in ("one.csv", "two.csv"):
        out = tmp_path / name
        subprocess.run(
            [sys.executable, "-m", "openchamber.cli", "simulate",
             "--recipe", str(recipe_path), "--preset", "default_desktop",
             "--hours", "48", "--seed", "7", "--out", str(out)],
            env=env, cwd=tmp_path, check=True, stderr=subprocess.DEVNULL)
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    assert len(outputs[0].decode().strip().split("\n")) - 1 == 16 * 17281
    _announce("determinism", f"two 48 h runs, {len(outputs[0])} identical bytes")
