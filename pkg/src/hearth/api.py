"""HTTP API for the live gateway, consumed by the operator dashboard.

The simulation advances on a background pacing thread (virtual seconds per
wall second set by `pace`); every request takes the runner lock so mutations
enter the engine in arrival order and reads see committed state.
"""

from __future__ import annotations

import json
import threading
import time
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import Depends, FastAPI, Header, HTTPException, Request
from fastapi.responses import StreamingResponse

from .domain import NS_PER_S, AttributeValue, ValueTypeError, seconds
from .gateway import AuthError, CommandError
from .home import HomeSimulation, Stimulus
from .simnet import MetricsTargets, run_report, uptime_fraction


class PacedRunner:
    """Advances a HomeSimulation in wall-clock time at a configurable pace."""

    def __init__(self, sim: HomeSimulation, pace: float = 1.0):
        self.sim = sim
        self.pace = pace
        self.lock = threading.RLock()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._t0 = 0.0

    def start(self):
        with self.lock:
            self.sim.start()
        self._t0 = time.monotonic()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def _loop(self):
        while not self._stop.is_set():
            target = int((time.monotonic() - self._t0) * self.pace * NS_PER_S)
            with self.lock:
                self.sim.advance_to(target)
            time.sleep(0.02)

    def stop(self):
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=2.0)
        with self.lock:
            if not self.sim._finalized:
                self.sim.finalize()


def _live_metrics(sim: HomeSimulation) -> dict:
    now = sim.engine.now
    metrics = sim.metrics
    if now > 0:
        intervals = list(sim._down_intervals)
        if sim._down_since is not None:
            intervals.append((sim._down_since, now))
        metrics.uptime_fraction = uptime_fraction(intervals, now)
    metrics.attacks_detected = min(
        metrics.attack_incidents, metrics.alert_count_by_category.get("security", 0)
    )
    return run_report(metrics, MetricsTargets())


def create_app(runner: PacedRunner, stimuli_enabled: bool = True) -> FastAPI:
    sim = runner.sim

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        runner.stop()

    app = FastAPI(title="hearth gateway", lifespan=lifespan)

    def auth(authorization: str = Header(default="")) -> str:
        if not authorization.startswith("Bearer "):
            raise HTTPException(401, "missing bearer token")
        token = authorization.removeprefix("Bearer ")
        with runner.lock:
            try:
                sim.gateway.check_session(token)
            except AuthError as e:
                raise HTTPException(401, str(e))
        return token

    @app.post("/session")
    def login(body: dict):
        with runner.lock:
            try:
                session = sim.gateway.authenticate_client(
                    body.get("username", ""), body.get("password", "")
                )
            except AuthError:
                raise HTTPException(401, "invalid credentials")
        return {"token": session.token, "expires_at": session.expires_at}

    @app.get("/devices")
    def list_devices(token: str = Depends(auth)):
        with runner.lock:
            entries = sim.gateway.list_devices(token)
            return [
                {"descriptor": desc.to_json(), "state": state.to_json()}
                for desc, state in entries
            ]

    @app.get("/devices/{device_id}")
    def get_device(device_id: str, token: str = Depends(auth)):
        with runner.lock:
            registration = sim.gateway.directory.get(device_id)
            if registration is None:
                raise HTTPException(404, "unknown device")
            series: list[list] = []
            for record in reversed(sim.log.records):
                if len(series) >= 200:
                    break
                if record.kind == "reading" and record.payload["device"] == device_id:
                    value = record.payload["value"]
                    if isinstance(value, dict):
                        value = value["value"]
                    if isinstance(value, (int, float)) and not isinstance(value, bool):
                        series.append([record.time, value])
            series.reverse()
            return {
                "descriptor": registration.descriptor.to_json(),
                "state": sim.gateway.states[device_id].to_json(),
                "series": series,
            }

    @app.post("/devices/{device_id}/command")
    def command(device_id: str, body: dict, token: str = Depends(auth)):
        try:
            value = AttributeValue(body["value"], body.get("unit", "none"))
        except (KeyError, ValueTypeError) as e:
            raise HTTPException(400, f"bad value: {e}")
        with runner.lock:
            try:
                result = sim.gateway.dispatch_command(token, device_id, body.get("attribute", ""), value)
            except CommandError as e:
                raise HTTPException(400, e.code)
        return {"result": result}

    @app.get("/alerts")
    def alerts(since: int = -1, stream: bool = False, token: str = Depends(auth)):
        def alert_records(after: int):
            with runner.lock:
                return [
                    {"seq": r.seq, **r.payload}
                    for r in sim.log.records
                    if r.kind == "alert" and r.seq > after
                ]

        if not stream:
            return alert_records(since)

        def generate():
            last = since
            while not runner._stop.is_set():
                batch = alert_records(last)
                for item in batch:
                    last = item["seq"]
                    yield json.dumps(item, sort_keys=True) + "\n"
                # blank-line heartbeat so disconnects surface while idle
                yield "\n"
                time.sleep(0.2)

        return StreamingResponse(generate(), media_type="application/x-ndjson")

    @app.post("/swipe")
    def swipe(body: dict, token: str = Depends(auth)):
        with runner.lock:
            entry = sim.inject_swipe(
                body.get("reader", "rfid_reader"),
                body.get("card_number", ""),
                body.get("portal", "main_door"),
            )
            if entry is None:
                raise HTTPException(409, "gateway down or reader unknown")
            portal_device = sim.access.portal_devices[entry.portal]
            return {
                "decision": entry.decision,
                "portal": entry.portal,
                "portal_device": portal_device,
            }

    @app.get("/metrics")
    def metrics(token: str = Depends(auth)):
        with runner.lock:
            return _live_metrics(sim)

    @app.post("/stimulus")
    def stimulus(body: dict, token: str = Depends(auth)):
        if not stimuli_enabled:
            raise HTTPException(403, "stimulus endpoint disabled")
        action = body.get("action", "")
        args = {k: v for k, v in body.items() if k != "action"}
        with runner.lock:
            if action == "gateway_restart":
                sim._handle_stimulus(Stimulus(sim.engine.now, "gateway_down", {}))
                sim.engine.schedule(
                    ("stimulus", Stimulus(sim.engine.now, "gateway_up", {})), seconds(5)
                )
            elif action in ("fire_start", "fire_stop", "motion", "rain"):
                sim._handle_stimulus(Stimulus(sim.engine.now, action, args))
            else:
                raise HTTPException(400, f"unknown stimulus {action!r}")
        return {"ok": True}

    return app
