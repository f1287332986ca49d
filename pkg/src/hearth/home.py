"""Scenario files and the simulated home that runs them.

A Scenario is one JSON document: seeded metadata, network config, initial
environment, device roster, access policy, rules, and a timed stimulus
timeline.  HomeSimulation wires the gateway, devices, rule engine, and access
control onto the discrete-event engine and writes the replayable event log.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

from .access import AccessController, AccessPolicy, PORTALS
from .devices import (
    ActuatorSnapshot,
    Environment,
    ThermalParams,
    read_sensor,
    step_environment,
)
from .domain import (
    NS_PER_S,
    Alert,
    AttributeValue,
    DeviceKind,
    DeviceState,
    LogRecord,
    SENSOR_KINDS,
    ms,
    seconds,
)
from .gateway import AuthError, Gateway, JoinRejected
from .persistence import EventLog
from .rules import RuleAst, evaluate_all, parse_rules, standard_pack, typecheck_rules
from .simnet import Engine, Message, NetConfig, Network, Rng, RunMetrics, uptime_fraction

TICK = NS_PER_S  # environment / rule evaluation period
HEARTBEAT_TICKS = 10  # sensors publish unconditionally every 10 s
MOTION_WINDOW = seconds(60)  # zone stays active this long past the last motion

STIMULUS_ACTIONS = (
    "fire_start", "fire_stop", "motion", "rain", "swipe",
    "gateway_down", "gateway_up", "bad_join", "login", "client_command",
)


class ScenarioError(Exception):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass(frozen=True)
class Stimulus:
    t: int  # ns
    action: str
    args: dict


@dataclass
class Scenario:
    name: str
    seed: int
    duration: int  # ns
    net: NetConfig
    env0: Environment
    thermal: ThermalParams
    outdoor_schedule: list[tuple[int, float]]
    devices: list[tuple[str, DeviceKind]]
    join_secret: str
    accounts: dict[str, str]
    session_ttl: int
    access: AccessPolicy
    rules_text: str
    timeline: list[Stimulus]

    @staticmethod
    def from_json(obj: dict, base_dir: Optional[Path] = None) -> "Scenario":
        problems: list[str] = []

        def req(section: dict, key: str, path: str, types, default=None):
            if key not in section:
                if default is not None:
                    return default
                problems.append(f"{path}.{key}: missing required field")
                return None
            value = section[key]
            if not isinstance(value, types):
                problems.append(f"{path}.{key}: expected {types}, got {type(value).__name__}")
                return None
            return value

        if not isinstance(obj, dict):
            raise ScenarioError(["scenario: top level must be a JSON object"])

        meta = obj.get("meta", {})
        name = req(meta, "name", "meta", str) or "unnamed"
        seed = req(meta, "seed", "meta", int)
        duration_s = req(meta, "duration_s", "meta", (int, float))
        duration = seconds(duration_s) if duration_s is not None else 0

        net_obj = obj.get("net", {})
        try:
            net = NetConfig(
                latency_base=ms(net_obj.get("latency_base_ms", 2.0)),
                latency_jitter=ms(net_obj.get("latency_jitter_ms", 6.0)),
                loss_probability=net_obj.get("loss_probability", 0.0),
                seed=seed or 0,
            )
        except Exception as e:
            problems.append(f"net: {e}")
            net = NetConfig()

        env_obj = obj.get("environment", {})
        env0 = Environment(
            indoor_temp=env_obj.get("indoor_temp_c", 24.0),
            outdoor_temp=env_obj.get("outdoor_temp_c", 25.0),
            water_level_pct=env_obj.get("water_level_pct", 50.0),
        )
        schedule = []
        for i, point in enumerate(env_obj.get("outdoor_schedule", [])):
            if (not isinstance(point, list) or len(point) != 2
                    or not all(isinstance(x, (int, float)) for x in point)):
                problems.append(f"environment.outdoor_schedule[{i}]: expected [t_s, temp]")
                continue
            schedule.append((seconds(point[0]), float(point[1])))
        if not schedule:
            schedule = [(0, env0.outdoor_temp)]
        schedule.sort()

        try:
            thermal = ThermalParams(**obj.get("thermal", {}))
        except Exception as e:
            problems.append(f"thermal: {e}")
            thermal = ThermalParams()

        gw = obj.get("gateway", {})
        join_secret = req(gw, "join_secret", "gateway", str, default="") or ""
        if not join_secret:
            problems.append("gateway.join_secret: missing required field")
        accounts = {}
        for i, acct in enumerate(gw.get("accounts", [])):
            u = req(acct, "username", f"gateway.accounts[{i}]", str)
            p = req(acct, "password", f"gateway.accounts[{i}]", str)
            if u and p:
                accounts[u] = p
        session_ttl = seconds(60 * gw.get("session_ttl_min", 30))

        devices: list[tuple[str, DeviceKind]] = []
        names = set()
        for i, dev in enumerate(obj.get("devices", [])):
            dn = req(dev, "display_name", f"devices[{i}]", str)
            kind_name = req(dev, "kind", f"devices[{i}]", str)
            if dn is None or kind_name is None:
                continue
            try:
                kind = DeviceKind(kind_name)
            except ValueError:
                problems.append(f"devices[{i}].kind: unknown kind {kind_name!r}")
                continue
            if dn in names:
                problems.append(f"devices[{i}].display_name: duplicate {dn!r}")
                continue
            names.add(dn)
            devices.append((dn, kind))
        if not devices:
            problems.append("devices: roster must not be empty")

        try:
            access = AccessPolicy.from_json(obj.get("access", {}))
        except Exception as e:
            problems.append(f"access: {e}")
            access = AccessPolicy()

        rules_obj = obj.get("rules", {})
        parts = []
        if rules_obj.get("standard_pack"):
            from .rules import STANDARD_PACK

            parts.append(STANDARD_PACK)
        if "inline" in rules_obj:
            parts.append(rules_obj["inline"])
        for i, rel in enumerate(rules_obj.get("paths", [])):
            path = (base_dir / rel) if base_dir else Path(rel)
            try:
                parts.append(path.read_text())
            except OSError as e:
                problems.append(f"rules.paths[{i}]: {e}")
        rules_text = "\n".join(parts)

        timeline: list[Stimulus] = []
        for i, item in enumerate(obj.get("timeline", [])):
            t_s = req(item, "t_s", f"timeline[{i}]", (int, float))
            action = req(item, "action", f"timeline[{i}]", str)
            if t_s is None or action is None:
                continue
            if action not in STIMULUS_ACTIONS:
                problems.append(f"timeline[{i}].action: unknown action {action!r}")
                continue
            t = seconds(t_s)
            if duration and not (0 <= t <= duration):
                problems.append(f"timeline[{i}].t_s: {t_s} outside [0, duration]")
                continue
            args = {k: v for k, v in item.items() if k not in ("t_s", "action")}
            timeline.append(Stimulus(t, action, args))
        timeline.sort(key=lambda s: s.t)

        if problems:
            raise ScenarioError(problems)
        return Scenario(name, seed, duration, net, env0, thermal, schedule, devices,
                        join_secret, accounts, session_ttl, access, rules_text, timeline)

    @staticmethod
    def load(path: Path, seed: Optional[int] = None,
             duration_s: Optional[float] = None) -> "Scenario":
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ScenarioError([f"scenario file: {e}"])
        scenario = Scenario.from_json(obj, base_dir=Path(path).parent)
        if seed is not None:
            scenario = replace(scenario, seed=seed,
                               net=replace(scenario.net, seed=seed))
        if duration_s is not None:
            scenario = replace(scenario, duration=seconds(duration_s))
        return scenario


def _interp_schedule(schedule: list[tuple[int, float]], t: int) -> float:
    if t <= schedule[0][0]:
        return schedule[0][1]
    for (t0, v0), (t1, v1) in zip(schedule, schedule[1:]):
        if t <= t1:
            return v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    return schedule[-1][1]


class HomeSimulation:
    """One deterministic run of a scenario, live or paced."""

    def __init__(self, scenario: Scenario, log: Optional[EventLog] = None):
        self.scenario = scenario
        self.log = log or EventLog()
        self.engine = Engine()
        self.rng = Rng(scenario.seed)
        self.metrics = RunMetrics()
        self.network = Network(self.engine, scenario.net, self.rng.derive("net"),
                               self.metrics, on_drop=self._on_drop,
                               record_on_send=False)
        self.gateway = Gateway(scenario.join_secret, scenario.accounts, self.rng,
                               now=lambda: self.engine.now, log=self._log,
                               route=self._route, session_ttl=scenario.session_ttl)
        self.env = scenario.env0.copy()
        self.rules: list[RuleAst] = parse_rules(scenario.rules_text)
        self._name_to_id: dict[str, str] = {}
        self._role: dict[DeviceKind, str] = {}  # first device id per kind
        self.access: Optional[AccessController] = None
        self._motion_tokens: dict[str, int] = {}
        self._down_intervals: list[tuple[int, int]] = []
        self._down_since: Optional[int] = None
        self._client_sessions: dict[str, str] = {}  # username -> token
        self._started = False
        self._finalized = False

    # -- logging ------------------------------------------------------------

    def _log(self, kind: str, payload: dict):
        self.log.append(LogRecord(self.log.next_seq, self.engine.now, kind, payload))
        if kind == "alert":
            self.metrics.record_alert(payload["category"])
        elif kind == "lifecycle":
            event = payload.get("event")
            if (event == "join_rejected" and payload.get("reason") == "bad_secret") \
                    or event == "login_lockout" \
                    or (event == "audit" and payload.get("decision") == "deny"):
                self.metrics.attack_incidents += 1

    def _on_drop(self, msg: Message):
        self._log("lifecycle", {"event": "message_dropped", "src": msg.src,
                                "dst": msg.dst, "msg_kind": msg.kind,
                                "send_time": msg.send_time})

    # -- transport ----------------------------------------------------------

    def _route(self, device_id: str, attribute: str, value: AttributeValue,
               source: str) -> bool:
        msg = self.network.send("gateway", device_id, "command",
                                {"attribute": attribute, "value": value, "source": source})
        return msg is not None

    def _deliver(self, event_payload):
        msg: Message = event_payload[1]
        latency = self.engine.now - msg.send_time
        self._log("message", {"event": "delivered", "src": msg.src, "dst": msg.dst,
                              "msg_kind": msg.kind, "send_time": msg.send_time,
                              "latency": latency})
        self.metrics.record_latency(latency)
        if msg.kind == "join":
            self._handle_join_delivery(msg)
        elif msg.kind == "command":
            self._apply_command_delivery(msg)
        # reading / ack / join_ack deliveries only feed traffic metrics

    def _handle_join_delivery(self, msg: Message):
        if not self.gateway.up:
            return  # no response; the device retries
        body = msg.payload
        try:
            registration = self.gateway.handle_join(
                body["display_name"], DeviceKind(body["kind"]), body["secret"]
            )
        except JoinRejected:
            return
        device_id = registration.descriptor.id
        self._name_to_id[body["display_name"]] = device_id
        self._role.setdefault(registration.descriptor.kind, device_id)
        if self.metrics.time_to_first_registration is None:
            self.metrics.time_to_first_registration = self.engine.now
        self.network.send("gateway", device_id, "join_ack", {"id": device_id})

    def _apply_command_delivery(self, msg: Message):
        from .devices import apply_command

        device_id = msg.dst
        body = msg.payload
        state = self.gateway.states.get(device_id)
        if state is None:
            return
        new_state, changed = apply_command(state, body["attribute"], body["value"],
                                           self.engine.now)
        if not changed:
            return
        self.gateway.states[device_id] = new_state
        self._log("command", {"event": "applied", "device": device_id,
                              "attribute": body["attribute"],
                              "value": body["value"].to_json(),
                              "source": body["source"]})
        # any portal-open (re)arms the auto-close countdown
        if self.access and body["attribute"] == "open" and body["value"].value is True:
            for portal, did in self.access.portal_devices.items():
                if did == device_id:
                    self.access.arm(portal)

    # -- sensors and rules --------------------------------------------------

    def _record_reading(self, device_id: str, attribute: str, value: AttributeValue):
        state = self.gateway.states[device_id]
        previous = state.attributes[attribute]
        if previous != value:
            attrs = dict(state.attributes)
            attrs[attribute] = value
            self.gateway.states[device_id] = DeviceState(state.kind, attrs,
                                                         last_update=self.engine.now)
        self._log("reading", {"device": device_id, "attribute": attribute,
                              "value": value.to_json()})
        if (attribute in ("fire", "smoke") and value.value is True
                and previous.value is False):
            self.gateway.record_alert(Alert(self.engine.now, "critical", "fire",
                                            device_id, f"{attribute} detected"))

    def _publish_readings(self, heartbeat: bool):
        for device_id in sorted(self.gateway.directory):
            descriptor = self.gateway.directory[device_id].descriptor
            if descriptor.kind not in SENSOR_KINDS or descriptor.kind is DeviceKind.RFID_READER:
                continue
            readings = read_sensor(descriptor, self.env, self.scenario.thermal)
            state = self.gateway.states[device_id]
            changed = {
                name: value for name, value in readings.items()
                if state.attributes[name] != value
            }
            if not changed and not heartbeat:
                continue
            for name, value in (readings.items() if heartbeat else changed.items()):
                self._record_reading(device_id, name, value)
            self.network.send(device_id, "gateway", "reading",
                              {name: value.to_json() for name, value in readings.items()})

    def _world_snapshot(self) -> dict[tuple[str, str], AttributeValue]:
        snapshot: dict[tuple[str, str], AttributeValue] = {}
        for name, device_id in self._name_to_id.items():
            for attr, value in self.gateway.states[device_id].attributes.items():
                snapshot[(name, attr)] = value
        return snapshot

    def _run_rules(self):
        commands, shadowed = evaluate_all(self.rules, self._world_snapshot())
        for rule_name, action in shadowed:
            self._log("lifecycle", {"event": "shadowed_action", "rule": rule_name,
                                    "device": action.device,
                                    "attribute": action.attribute,
                                    "value": action.value.to_json()})
        for rule_name, action in commands:
            device_id = self._name_to_id.get(action.device)
            if device_id is None:
                continue
            if self.gateway.states[device_id].attributes[action.attribute] == action.value:
                continue  # idempotent: world already satisfies the rule
            self.gateway.dispatch(device_id, action.attribute, action.value,
                                  source=f"rule:{rule_name}")

    def _actuators(self) -> ActuatorSnapshot:
        def is_on(kind: DeviceKind, attr: str = "on") -> bool:
            device_id = self._role.get(kind)
            if device_id is None:
                return False
            return bool(self.gateway.states[device_id].attributes[attr].value)

        return ActuatorSnapshot(
            ac_on=is_on(DeviceKind.AIR_CONDITIONER),
            furnace_on=is_on(DeviceKind.FURNACE),
            fire_sprinkler_on=is_on(DeviceKind.FIRE_SPRINKLER),
            lawn_sprinkler_on=is_on(DeviceKind.LAWN_SPRINKLER),
        )

    def _tick(self):
        now = self.engine.now
        self.env.outdoor_temp = _interp_schedule(self.scenario.outdoor_schedule, now)
        self.env = step_environment(self.env, self._actuators(),
                                    self.scenario.thermal, TICK)
        if self.gateway.up:
            tick_index = now // TICK
            self._publish_readings(heartbeat=(tick_index % HEARTBEAT_TICKS == 0))
            self._run_rules()
        self.engine.schedule(("tick",), TICK)

    # -- stimuli ------------------------------------------------------------

    def _handle_stimulus(self, stim: Stimulus):
        self._log("lifecycle", {"event": "stimulus", "action": stim.action,
                                **{k: v for k, v in sorted(stim.args.items())}})
        if stim.action == "fire_start":
            self.env.fire_active = True
            self.env.suppression_s = 0.0
        elif stim.action == "fire_stop":
            self.env.fire_active = False
        elif stim.action == "motion":
            zone = stim.args.get("zone", "zone1")
            self.env.motion_zones.add(zone)
            self._motion_tokens[zone] = self._motion_tokens.get(zone, 0) + 1
            self.engine.schedule(("motion_clear", zone, self._motion_tokens[zone]),
                                 MOTION_WINDOW)
        elif stim.action == "rain":
            self.env.water_level_pct = min(
                100.0, max(0.0, self.env.water_level_pct + stim.args.get("delta_pct", 10.0))
            )
        elif stim.action == "swipe":
            self.inject_swipe(stim.args.get("reader", "rfid_reader"),
                              stim.args["card"], stim.args.get("portal", "main_door"))
        elif stim.action == "gateway_down":
            if self.gateway.up:
                self.gateway.up = False
                self._down_since = self.engine.now
                self._log("lifecycle", {"event": "gateway_down"})
        elif stim.action == "gateway_up":
            if not self.gateway.up:
                self.gateway.up = True
                self._down_intervals.append((self._down_since, self.engine.now))
                self._down_since = None
                self._log("lifecycle", {"event": "gateway_up"})
        elif stim.action == "bad_join":
            self.network.send(f"rogue:{stim.args.get('display_name', 'rogue')}",
                              "gateway", "join",
                              {"display_name": stim.args.get("display_name", "rogue"),
                               "kind": stim.args.get("kind", "Light"),
                               "secret": stim.args.get("secret", "")})
        elif stim.action == "login":
            try:
                session = self.gateway.authenticate_client(
                    stim.args["username"], stim.args["password"]
                )
                self._client_sessions[stim.args["username"]] = session.token
            except AuthError:
                pass
        elif stim.action == "client_command":
            self._client_command(stim.args)

    def _client_command(self, args: dict):
        username = args.get("username")
        token = self._client_sessions.get(username)
        if token is None and username in self.scenario.accounts:
            session = self.gateway.authenticate_client(
                username, self.scenario.accounts[username]
            )
            token = session.token
            self._client_sessions[username] = token
        device_id = self._name_to_id.get(args["device"])
        if device_id is None or token is None:
            return
        from .domain import attribute_spec

        kind = self.gateway.directory[device_id].descriptor.kind
        spec = attribute_spec(kind, args["attribute"])
        unit = spec.unit if spec.value_type == "number" else "none"
        value = AttributeValue(args["value"], unit) if spec.value_type == "number" \
            else AttributeValue(args["value"])
        self.gateway.dispatch_command(token, device_id, args["attribute"], value)

    def _motion_timeout(self):
        """60 s past the last motion: lights and webcams go back off.

        Edge-triggered on purpose: a level rule for the off transition would
        permanently fight manual light control from the dashboard.
        """
        if not self.gateway.up:
            return
        for device_id in sorted(self.gateway.directory):
            kind = self.gateway.directory[device_id].descriptor.kind
            if kind is DeviceKind.LIGHT:
                attr = "on"
            elif kind is DeviceKind.WEBCAM:
                attr = "recording"
            else:
                continue
            if self.gateway.states[device_id].attributes[attr].value:
                self.gateway.dispatch(device_id, attr, AttributeValue(False),
                                      source="rule:motion_timeout")

    def inject_swipe(self, reader_name: str, card: str, portal: str):
        if not self.gateway.up or self.access is None:
            return None
        reader_id = self._name_to_id.get(reader_name)
        if reader_id is None:
            return None
        return self.access.on_swipe(reader_id, card, portal)

    # -- run control --------------------------------------------------------

    def start(self):
        assert not self._started
        self._started = True
        self._log("lifecycle", {"event": "run_start", "scenario": self.scenario.name,
                                "seed": self.scenario.seed})
        for display_name, kind in self.scenario.devices:
            self._send_join(display_name, kind)
        self.engine.schedule(("join_check",), seconds(1))
        for stim in self.scenario.timeline:
            self.engine.schedule(("stimulus", stim), stim.t)
        self.engine.schedule(("tick",), TICK)
        # access control needs the portal devices, resolved after registration;
        # bind lazily on the first event that needs it
        self._bind_access_when_ready()

    def _send_join(self, display_name: str, kind: DeviceKind):
        self.network.send(f"new:{display_name}", "gateway", "join",
                          {"display_name": display_name, "kind": kind.value,
                           "secret": self.scenario.join_secret})

    def _bind_access_when_ready(self):
        if self.access is not None:
            return
        roster_kinds = {kind for _, kind in self.scenario.devices}
        portal_devices = {}
        for portal, kind in (("main_door", DeviceKind.DOOR),
                             ("garage", DeviceKind.GARAGE_DOOR)):
            if kind in roster_kinds:
                if kind not in self._role:
                    return  # that portal has not registered yet
                portal_devices[portal] = self._role[kind]
        if self._role.get(DeviceKind.RFID_READER) and portal_devices:
            self.access = AccessController(
                self.scenario.access, self.gateway, portal_devices,
                schedule=lambda payload, delay: self.engine.schedule(payload, delay),
                record_reading=self._record_reading,
            )

    def _handle_event(self, payload):
        tag = payload[0] if isinstance(payload, tuple) else payload
        if tag == "deliver":
            self._deliver(payload)
            self._bind_access_when_ready()
        elif tag == "tick":
            self._tick()
        elif tag == "stimulus":
            self._handle_stimulus(payload[1])
        elif tag == "auto_close":
            if self.access:
                self.access.auto_close_check(payload[1], payload[2])
        elif tag == "motion_clear":
            _, zone, token = payload
            if self._motion_tokens.get(zone) == token:
                self.env.motion_zones.discard(zone)
                if not self.env.motion_zones:
                    self._motion_timeout()
        elif tag == "join_check":
            missing = [
                (dn, kind) for dn, kind in self.scenario.devices
                if dn not in self._name_to_id
            ]
            for dn, kind in missing:
                if self.gateway.up:
                    self._send_join(dn, kind)
            if missing:
                self.engine.schedule(("join_check",), seconds(1))

    def advance_to(self, t: int):
        while True:
            next_time = self.engine.peek_time()
            if next_time is None or next_time > t:
                break
            _, fired = self.engine.step()
            for event in fired:
                self._handle_event(event.payload)
        if t > self.engine.now:
            self.engine.now = t

    def finalize(self):
        assert self._started and not self._finalized
        self._finalized = True
        duration = self.engine.now
        if self._down_since is not None:
            self._down_intervals.append((self._down_since, duration))
            self._down_since = None
        self.metrics.uptime_fraction = uptime_fraction(self._down_intervals, duration) \
            if duration > 0 else 1.0
        self.metrics.attacks_detected = min(
            self.metrics.attack_incidents,
            self.metrics.alert_count_by_category.get("security", 0),
        )
        self._log("lifecycle", {"event": "run_end", "duration": duration})
        self.log.flush()

    def run(self):
        """Run the scenario start to finish; returns the final snapshot."""
        self.start()
        self.advance_to(self.scenario.duration)
        self.finalize()
        return self.snapshot()

    def snapshot(self) -> dict:
        """Final world state in the same shape persistence.replay reconstructs."""
        return {
            "devices": {
                did: {
                    "descriptor": self.gateway.directory[did].descriptor.to_json(),
                    "state": self.gateway.states[did].to_json(),
                }
                for did in sorted(self.gateway.directory)
            },
            "alerts": dict(sorted(self.metrics.alert_count_by_category.items())),
            "metrics": {
                "uptime_fraction": self.metrics.uptime_fraction,
                "dropped_count": self.metrics.dropped_count,
                "latency_count": len(self.metrics.latency_samples),
                "latency_total": sum(self.metrics.latency_samples),
            },
        }

    def typecheck(self):
        """Validate the rule set against the roster (directory by display name)."""
        directory = {dn: kind for dn, kind in self.scenario.devices}
        typecheck_rules(self.rules, directory)
