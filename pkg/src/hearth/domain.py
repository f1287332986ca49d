"""Shared vocabulary: device identities, attribute values, alerts, log records.

Timestamps are integer nanoseconds of simulated time, starting at 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000
NS_PER_MIN = 60 * NS_PER_S


def ms(x: float) -> int:
    return round(x * NS_PER_MS)


def seconds(x: float) -> int:
    return round(x * NS_PER_S)


class DomainError(Exception):
    """Base class for errors raised by the core vocabulary."""


class EncodeError(DomainError):
    pass


class DecodeError(DomainError):
    pass


class ValueTypeError(DomainError):
    """Comparison or assignment between incompatible attribute values."""


UNIT_NONE = "none"
UNIT_CELSIUS = "C"
UNIT_PERCENT = "%"
UNIT_PPM = "ppm"

UNITS = (UNIT_NONE, UNIT_CELSIUS, UNIT_PERCENT, UNIT_PPM)


class DeviceKind(str, Enum):
    THERMOSTAT = "Thermostat"
    AIR_CONDITIONER = "AirConditioner"
    FURNACE = "Furnace"
    FIRE_MONITOR = "FireMonitor"
    SMOKE_DETECTOR = "SmokeDetector"
    FIRE_SPRINKLER = "FireSprinkler"
    SIREN = "Siren"
    WINDOW = "Window"
    MOTION_DETECTOR = "MotionDetector"
    WEBCAM = "Webcam"
    LIGHT = "Light"
    WATER_LEVEL_MONITOR = "WaterLevelMonitor"
    LAWN_SPRINKLER = "LawnSprinkler"
    RFID_READER = "RfidReader"
    DOOR = "Door"
    GARAGE_DOOR = "GarageDoor"


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    value_type: str  # "bool" | "number" | "string"
    unit: str = UNIT_NONE
    writable: bool = False


# Fixed attribute schema per device kind.  Sensors expose read-only
# attributes; actuators expose at least one writable attribute.
KIND_SCHEMAS: dict[DeviceKind, tuple[AttributeSpec, ...]] = {
    DeviceKind.THERMOSTAT: (AttributeSpec("temperature", "number", UNIT_CELSIUS),),
    DeviceKind.AIR_CONDITIONER: (AttributeSpec("on", "bool", writable=True),),
    DeviceKind.FURNACE: (AttributeSpec("on", "bool", writable=True),),
    DeviceKind.FIRE_MONITOR: (AttributeSpec("fire", "bool"),),
    DeviceKind.SMOKE_DETECTOR: (AttributeSpec("smoke", "bool"),),
    DeviceKind.FIRE_SPRINKLER: (AttributeSpec("on", "bool", writable=True),),
    DeviceKind.SIREN: (AttributeSpec("on", "bool", writable=True),),
    DeviceKind.WINDOW: (AttributeSpec("open", "bool", writable=True),),
    DeviceKind.MOTION_DETECTOR: (AttributeSpec("motion", "bool"),),
    DeviceKind.WEBCAM: (AttributeSpec("recording", "bool", writable=True),),
    DeviceKind.LIGHT: (AttributeSpec("on", "bool", writable=True),),
    DeviceKind.WATER_LEVEL_MONITOR: (AttributeSpec("level", "number", UNIT_PERCENT),),
    DeviceKind.LAWN_SPRINKLER: (AttributeSpec("on", "bool", writable=True),),
    DeviceKind.RFID_READER: (AttributeSpec("last_card", "string"),),
    DeviceKind.DOOR: (AttributeSpec("open", "bool", writable=True),),
    DeviceKind.GARAGE_DOOR: (AttributeSpec("open", "bool", writable=True),),
}

SENSOR_KINDS = frozenset(
    k for k, schema in KIND_SCHEMAS.items() if not any(a.writable for a in schema)
)
ACTUATOR_KINDS = frozenset(DeviceKind) - SENSOR_KINDS


def attribute_spec(kind: DeviceKind, name: str) -> AttributeSpec:
    for spec in KIND_SCHEMAS[kind]:
        if spec.name == name:
            return spec
    raise KeyError(f"{kind.value} has no attribute {name!r}")


@dataclass(frozen=True)
class AttributeValue:
    """Tagged value: boolean, unit-carrying finite number, or string."""

    value: bool | float | str
    unit: str = UNIT_NONE

    def __post_init__(self):
        if isinstance(self.value, bool) or isinstance(self.value, str):
            if self.unit != UNIT_NONE:
                raise ValueTypeError("only numbers carry a unit")
        elif isinstance(self.value, (int, float)):
            if not math.isfinite(self.value):
                raise ValueTypeError("numeric attribute values must be finite")
            object.__setattr__(self, "value", float(self.value))
        else:
            raise ValueTypeError(f"unsupported value type {type(self.value).__name__}")
        if self.unit not in UNITS:
            raise ValueTypeError(f"unknown unit {self.unit!r}")

    @property
    def tag(self) -> str:
        if isinstance(self.value, bool):
            return "bool"
        if isinstance(self.value, float):
            return "number"
        return "string"

    def to_json(self):
        if self.tag == "number" and self.unit != UNIT_NONE:
            return {"value": self.value, "unit": self.unit}
        return self.value

    @staticmethod
    def from_json(obj) -> "AttributeValue":
        if isinstance(obj, dict):
            return AttributeValue(obj["value"], obj.get("unit", UNIT_NONE))
        return AttributeValue(obj)


_COMPARISON_OPS = ("=", "!=", "<", "<=", ">", ">=")


def compare_values(a: AttributeValue, b: AttributeValue, op: str) -> bool:
    """Compare two attribute values with one of = != < <= > >=.

    Booleans and strings only support equality; numbers must share a unit.
    """
    if op not in _COMPARISON_OPS:
        raise ValueTypeError(f"unknown comparison operator {op!r}")
    if a.tag != b.tag:
        raise ValueTypeError(f"cannot compare {a.tag} with {b.tag}")
    if a.tag == "number" and a.unit != b.unit:
        raise ValueTypeError(f"unit mismatch: {a.unit} vs {b.unit}")
    if a.tag != "number" and op not in ("=", "!="):
        raise ValueTypeError(f"operator {op!r} not defined for {a.tag} values")
    if op == "=":
        return a.value == b.value
    if op == "!=":
        return a.value != b.value
    if op == "<":
        return a.value < b.value
    if op == "<=":
        return a.value <= b.value
    if op == ">":
        return a.value > b.value
    return a.value >= b.value


@dataclass(frozen=True)
class DeviceDescriptor:
    id: str
    display_name: str
    kind: DeviceKind
    logical_address: str

    def __post_init__(self):
        if not self.id:
            raise DomainError("device id must be non-empty")
        if not self.display_name:
            raise DomainError("display_name must be non-empty")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "display_name": self.display_name,
            "kind": self.kind.value,
            "logical_address": self.logical_address,
        }

    @staticmethod
    def from_json(obj: dict) -> "DeviceDescriptor":
        return DeviceDescriptor(
            obj["id"], obj["display_name"], DeviceKind(obj["kind"]), obj["logical_address"]
        )


@dataclass
class DeviceState:
    """Current attribute values of one device plus its last-update time."""

    kind: DeviceKind
    attributes: dict[str, AttributeValue]
    last_update: int = 0

    @staticmethod
    def initial(kind: DeviceKind) -> "DeviceState":
        attrs: dict[str, AttributeValue] = {}
        for spec in KIND_SCHEMAS[kind]:
            if spec.value_type == "bool":
                attrs[spec.name] = AttributeValue(False)
            elif spec.value_type == "number":
                attrs[spec.name] = AttributeValue(0.0, spec.unit)
            else:
                attrs[spec.name] = AttributeValue("")
        return DeviceState(kind, attrs)

    def to_json(self) -> dict:
        return {
            "attributes": {k: v.to_json() for k, v in sorted(self.attributes.items())},
            "last_update": self.last_update,
        }


SEVERITIES = ("info", "warning", "critical")
ALERT_CATEGORIES = ("security", "fire", "water", "system")


@dataclass(frozen=True)
class Alert:
    time: int
    severity: str
    category: str
    source: str  # DeviceId or "gateway"
    message: str

    def __post_init__(self):
        if self.severity not in SEVERITIES:
            raise DomainError(f"unknown severity {self.severity!r}")
        if self.category not in ALERT_CATEGORIES:
            raise DomainError(f"unknown alert category {self.category!r}")

    def to_json(self) -> dict:
        return {
            "time": self.time,
            "severity": self.severity,
            "category": self.category,
            "source": self.source,
            "message": self.message,
        }

    @staticmethod
    def from_json(obj: dict) -> "Alert":
        return Alert(obj["time"], obj["severity"], obj["category"], obj["source"], obj["message"])


RECORD_KINDS = ("reading", "command", "alert", "lifecycle", "message")


@dataclass(frozen=True)
class LogRecord:
    seq: int
    time: int
    kind: str
    payload: Any

    def __post_init__(self):
        if self.seq < 0:
            raise DomainError("seq must be >= 0")
        if self.kind not in RECORD_KINDS:
            raise DomainError(f"unknown record kind {self.kind!r}")


def _check_finite(obj, path="payload"):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise EncodeError(f"non-finite number at {path}")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}[{i}]")


def encode_record(record: LogRecord) -> str:
    """Encode a record as one canonical JSON line (sorted keys, no spaces)."""
    _check_finite(record.payload)
    obj = {"kind": record.kind, "payload": record.payload, "seq": record.seq, "t": record.time}
    try:
        return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    except ValueError as e:
        raise EncodeError(str(e)) from e


def decode_record(line: str) -> LogRecord:
    """Parse one JSON line back into a LogRecord; unknown extra keys are ignored."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise DecodeError(f"malformed record at byte {e.pos}: {e.msg}") from e
    if not isinstance(obj, dict):
        raise DecodeError("record line is not a JSON object")
    for key in ("seq", "t", "kind", "payload"):
        if key not in obj:
            raise DecodeError(f"missing required key {key!r}")
    try:
        return LogRecord(obj["seq"], obj["t"], obj["kind"], obj["payload"])
    except DomainError as e:
        raise DecodeError(str(e)) from e
