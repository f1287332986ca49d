"""Append-only JSON Lines event log, replay, and reading queries.

The log is the single source of truth: replaying it reconstructs the device
directory, final device states, alert counts, and run metrics, which is how
determinism is verified end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .domain import (
    AttributeValue,
    DeviceDescriptor,
    DeviceState,
    DecodeError,
    LogRecord,
    decode_record,
    encode_record,
)
from .simnet import RunMetrics, uptime_fraction


class IntegrityError(Exception):
    pass


class EventLog:
    """Strictly-sequenced append-only record store, optionally file-backed."""

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path else None
        self.records: list[LogRecord] = []
        self._fh = None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8")

    @property
    def next_seq(self) -> int:
        return len(self.records)

    def append(self, record: LogRecord):
        if record.seq != self.next_seq:
            raise IntegrityError(
                f"seq gap: expected {self.next_seq}, got {record.seq}"
            )
        line = encode_record(record)
        self.records.append(record)
        if self._fh:
            self._fh.write(line + "\n")

    def flush(self):
        if self._fh:
            self._fh.flush()

    def close(self):
        if self._fh:
            self._fh.close()
            self._fh = None


def load_log(path: Path) -> list[LogRecord]:
    """Read and validate a log file; errors name the failing seq and offset."""
    records: list[LogRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                record = decode_record(line)
            except DecodeError as e:
                raise IntegrityError(f"corrupt record at seq {lineno}: {e}") from e
            if record.seq != len(records):
                raise IntegrityError(
                    f"seq gap at line {lineno + 1}: expected {len(records)}, got {record.seq}"
                )
            records.append(record)
    return records


@dataclass
class ReplayResult:
    snapshot: dict
    metrics: RunMetrics
    duration: Optional[int] = None


def replay(records: list[LogRecord]) -> ReplayResult:
    """Rebuild final world state and metrics purely from log records."""
    descriptors: dict[str, DeviceDescriptor] = {}
    states: dict[str, DeviceState] = {}
    alert_counts: dict[str, int] = {}
    metrics = RunMetrics()
    down_intervals: list[tuple[int, int]] = []
    down_since: Optional[int] = None
    duration: Optional[int] = None
    incidents = 0

    def set_attr(device: str, attribute: str, value, t: int):
        state = states.get(device)
        if state is None or attribute not in state.attributes:
            return
        new_value = AttributeValue.from_json(value)
        if state.attributes[attribute] != new_value:
            state.attributes[attribute] = new_value
            state.last_update = t

    for record in records:
        payload = record.payload
        if record.kind == "lifecycle":
            event = payload.get("event")
            if event == "registered":
                descriptor = DeviceDescriptor.from_json(payload["descriptor"])
                descriptors[descriptor.id] = descriptor
                states[descriptor.id] = DeviceState(
                    descriptor.kind, DeviceState.initial(descriptor.kind).attributes,
                    last_update=record.time,
                )
                if metrics.time_to_first_registration is None:
                    metrics.time_to_first_registration = record.time
            elif event == "gateway_down":
                down_since = record.time
            elif event == "gateway_up" and down_since is not None:
                down_intervals.append((down_since, record.time))
                down_since = None
            elif event == "message_dropped":
                metrics.dropped_count += 1
            elif event == "run_end":
                duration = payload["duration"]
            elif event == "join_rejected" and payload.get("reason") == "bad_secret":
                incidents += 1
            elif event == "login_lockout":
                incidents += 1
            elif event == "audit" and payload.get("decision") == "deny":
                incidents += 1
        elif record.kind == "reading":
            set_attr(payload["device"], payload["attribute"], payload["value"], record.time)
        elif record.kind == "command":
            if payload.get("event") == "applied":
                set_attr(payload["device"], payload["attribute"], payload["value"],
                         record.time)
        elif record.kind == "alert":
            alert_counts[payload["category"]] = alert_counts.get(payload["category"], 0) + 1
            metrics.record_alert(payload["category"])
        elif record.kind == "message":
            metrics.record_latency(payload["latency"])

    if duration is not None:
        if down_since is not None:
            down_intervals.append((down_since, duration))
        metrics.uptime_fraction = uptime_fraction(down_intervals, duration)
    metrics.attack_incidents = incidents
    metrics.attacks_detected = min(incidents, alert_counts.get("security", 0))

    snapshot = {
        "devices": {
            did: {
                "descriptor": descriptors[did].to_json(),
                "state": states[did].to_json(),
            }
            for did in sorted(descriptors)
        },
        "alerts": dict(sorted(alert_counts.items())),
        "metrics": {
            "uptime_fraction": metrics.uptime_fraction,
            "dropped_count": metrics.dropped_count,
            "latency_count": len(metrics.latency_samples),
            "latency_total": sum(metrics.latency_samples),
        },
    }
    return ReplayResult(snapshot, metrics, duration)


@dataclass
class ReadingSeries:
    device: str
    attribute: str
    points: list[tuple[int, object]] = field(default_factory=list)


def query_readings(records: list[LogRecord], device: str, attribute: str,
                   t0: int, t1: int) -> ReadingSeries:
    """All logged readings for (device, attribute) with t0 <= t <= t1."""
    if t0 > t1:
        raise ValueError("t0 must be <= t1")
    series = ReadingSeries(device, attribute)
    for record in records:
        if record.kind != "reading" or not (t0 <= record.time <= t1):
            continue
        if record.payload["device"] == device and record.payload["attribute"] == attribute:
            value = AttributeValue.from_json(record.payload["value"])
            if not series.points or series.points[-1][0] < record.time:
                series.points.append((record.time, value.value))
    return series


def verify_access_log(records: list[LogRecord], auto_close_after: int,
                      slack: int = 2_000_000_000) -> list[str]:
    """Scan a log for access-control violations.

    Every portal-open transition must follow a recent allow audit entry or an
    authenticated client command, and no portal may stay open longer than
    auto_close_after (plus delivery slack) past its last authorization.
    Returns a list of violation descriptions; empty means the log is clean.
    """
    portal_for_kind = {"Door": "main_door", "GarageDoor": "garage"}
    device_for_portal: dict[str, str] = {}  # portal name -> first device of that kind
    last_auth: dict[str, int] = {}  # device id -> last allow/client authorization
    open_since: dict[str, Optional[int]] = {}
    violations: list[str] = []

    def check_open_deadline(device: str, now: int):
        if open_since.get(device) is not None:
            deadline = last_auth.get(device, open_since[device]) + auto_close_after + slack
            if now > deadline:
                violations.append(
                    f"portal {device} still open at t={now}, last authorized at "
                    f"{last_auth.get(device)}"
                )
                open_since[device] = None  # report once

    for record in records:
        payload = record.payload
        if record.kind == "lifecycle" and payload.get("event") == "registered":
            descriptor = payload["descriptor"]
            portal = portal_for_kind.get(descriptor["kind"])
            if portal and portal not in device_for_portal:
                device_for_portal[portal] = descriptor["id"]
        elif record.kind == "lifecycle" and payload.get("event") == "audit":
            if payload["decision"] == "allow":
                device = device_for_portal.get(payload["portal"])
                if device:
                    last_auth[device] = record.time
        elif record.kind == "command" and payload.get("event") == "applied":
            device = payload["device"]
            if device not in device_for_portal.values() or payload["attribute"] != "open":
                continue
            for d in device_for_portal.values():
                check_open_deadline(d, record.time)
            source = payload.get("source", "")
            if payload["value"] is True:
                if source.startswith("client:"):
                    last_auth[device] = record.time
                elif not (device in last_auth and record.time - last_auth[device] <= slack):
                    violations.append(
                        f"portal {device} opened at t={record.time} without authorization"
                    )
                open_since[device] = record.time
            else:
                open_since[device] = None
        elif record.kind == "lifecycle" and payload.get("event") == "run_end":
            for d in device_for_portal.values():
                check_open_deadline(d, payload["duration"])
    return violations
