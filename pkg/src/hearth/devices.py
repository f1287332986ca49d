"""Device behavior models and the lumped physical environment.

A single-zone thermal model (forward Euler), fire/smoke dynamics, lawn water
level, and motion zones give the automation rules something real to act on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .domain import (
    NS_PER_MIN,
    AttributeValue,
    DeviceDescriptor,
    DeviceKind,
    DeviceState,
    SENSOR_KINDS,
    UNIT_CELSIUS,
    UNIT_PERCENT,
    ValueTypeError,
    attribute_spec,
)


class DeviceError(Exception):
    pass


@dataclass
class Environment:
    indoor_temp: float = 24.0  # °C
    outdoor_temp: float = 25.0  # °C, scenario-scripted
    fire_active: bool = False
    smoke_ppm: float = 0.0
    water_level_pct: float = 50.0
    motion_zones: set[str] = field(default_factory=set)
    # continuous seconds of fire-sprinkler operation while a fire burns
    suppression_s: float = 0.0

    def copy(self) -> "Environment":
        return Environment(
            self.indoor_temp,
            self.outdoor_temp,
            self.fire_active,
            self.smoke_ppm,
            self.water_level_pct,
            set(self.motion_zones),
            self.suppression_s,
        )


@dataclass(frozen=True)
class ThermalParams:
    k_leak: float = 0.05  # 1/min, coupling to outdoor temperature
    q_ac: float = -0.8  # °C/min while the AC runs
    q_furnace: float = 0.8  # °C/min while the furnace runs
    q_fire: float = 5.0  # °C/min while a fire burns
    smoke_rise_ppm_per_min: float = 50.0
    smoke_decay_per_min: float = 0.10
    smoke_threshold_ppm: float = 200.0
    evaporation_pct_per_min: float = 0.5
    sprinkler_fill_pct_per_min: float = 5.0
    extinguish_after_min: float = 2.0

    def __post_init__(self):
        if self.k_leak <= 0:
            raise DeviceError("k_leak must be > 0")
        if not (self.q_ac < 0 < self.q_furnace):
            raise DeviceError("q_ac must be negative and q_furnace positive")


@dataclass(frozen=True)
class ThermostatConfig:
    ac_on_above: float = 28.0
    furnace_on_below: float = 18.0
    hysteresis: float = 1.0

    def __post_init__(self):
        if self.ac_on_above - self.hysteresis <= self.furnace_on_below + self.hysteresis:
            raise DeviceError("thermostat dead bands overlap")


@dataclass(frozen=True)
class ActuatorSnapshot:
    """The actuator states the environment physics cares about."""

    ac_on: bool = False
    furnace_on: bool = False
    fire_sprinkler_on: bool = False
    lawn_sprinkler_on: bool = False


def step_environment(env: Environment, actuators: ActuatorSnapshot,
                     params: ThermalParams, dt: int) -> Environment:
    """One forward-Euler step of dt nanoseconds; returns a new Environment."""
    if dt <= 0:
        raise DeviceError("dt must be > 0")
    dt_min = dt / NS_PER_MIN
    out = env.copy()

    d_temp = params.k_leak * (env.outdoor_temp - env.indoor_temp)
    if actuators.ac_on:
        d_temp += params.q_ac
    if actuators.furnace_on:
        d_temp += params.q_furnace
    if env.fire_active:
        d_temp += params.q_fire
    out.indoor_temp = env.indoor_temp + dt_min * d_temp

    if env.fire_active:
        out.smoke_ppm = env.smoke_ppm + params.smoke_rise_ppm_per_min * dt_min
        if actuators.fire_sprinkler_on:
            out.suppression_s = env.suppression_s + dt_min * 60.0
            if out.suppression_s >= params.extinguish_after_min * 60.0:
                out.fire_active = False
                out.suppression_s = 0.0
        else:
            out.suppression_s = 0.0
    else:
        out.smoke_ppm = env.smoke_ppm * (1.0 - params.smoke_decay_per_min) ** dt_min
        out.suppression_s = 0.0

    level = env.water_level_pct - params.evaporation_pct_per_min * dt_min
    if actuators.lawn_sprinkler_on:
        level += params.sprinkler_fill_pct_per_min * dt_min
    out.water_level_pct = min(100.0, max(0.0, level))
    out.smoke_ppm = max(0.0, out.smoke_ppm)
    return out


def read_sensor(device: DeviceDescriptor, env: Environment,
                params: ThermalParams = ThermalParams()) -> dict[str, AttributeValue]:
    """Project the environment onto one sensor's attributes (pure)."""
    kind = device.kind
    if kind not in SENSOR_KINDS:
        raise DeviceError(f"{kind.value} is not a sensor")
    if kind is DeviceKind.THERMOSTAT:
        return {"temperature": AttributeValue(round(env.indoor_temp, 4), UNIT_CELSIUS)}
    if kind is DeviceKind.FIRE_MONITOR:
        return {"fire": AttributeValue(env.fire_active)}
    if kind is DeviceKind.SMOKE_DETECTOR:
        return {"smoke": AttributeValue(env.smoke_ppm >= params.smoke_threshold_ppm)}
    if kind is DeviceKind.WATER_LEVEL_MONITOR:
        return {"level": AttributeValue(round(env.water_level_pct, 4), UNIT_PERCENT)}
    if kind is DeviceKind.MOTION_DETECTOR:
        return {"motion": AttributeValue(bool(env.motion_zones))}
    if kind is DeviceKind.RFID_READER:
        # last_card is set by swipe handling, not by the environment
        return {}
    raise DeviceError(f"no sensor projection for {kind.value}")


def thermostat_decide(temp: float, ac_on: bool, furnace_on: bool,
                      cfg: ThermostatConfig = ThermostatConfig()) -> tuple[bool, bool]:
    """Bang-bang HVAC with hysteresis; never both AC and furnace on."""
    if temp > cfg.ac_on_above:
        return True, False
    if temp < cfg.furnace_on_below:
        return False, True
    if ac_on and temp > cfg.ac_on_above - cfg.hysteresis:
        return True, False
    if furnace_on and temp < cfg.furnace_on_below + cfg.hysteresis:
        return False, True
    return False, False


def apply_command(state: DeviceState, attribute: str, value: AttributeValue,
                  now: int) -> tuple[DeviceState, bool]:
    """Set a writable attribute; returns (new_state, changed).

    Setting an attribute to its current value is a no-op (changed=False) so the
    level-triggered rule engine stays quiet once the world matches its rules.
    """
    spec = attribute_spec(state.kind, attribute)
    if not spec.writable:
        raise ValueTypeError(f"{state.kind.value}.{attribute} is read-only")
    if value.tag != spec.value_type:
        raise ValueTypeError(
            f"{state.kind.value}.{attribute} expects {spec.value_type}, got {value.tag}"
        )
    if value.tag == "number" and value.unit != spec.unit:
        raise ValueTypeError(
            f"{state.kind.value}.{attribute} expects unit {spec.unit}, got {value.unit}"
        )
    if state.attributes[attribute] == value:
        return state, False
    attrs = dict(state.attributes)
    attrs[attribute] = value
    return DeviceState(state.kind, attrs, last_update=now), True
