"""Home Gateway: device registration, client sessions, command routing, alerts.

The gateway owns the device directory and every device's current state.  It is
driven from inside the simulation engine; routing of commands to devices is
delegated to the host via a `route` callable so transport stays in simnet.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from typing import Callable, Optional

from .domain import (
    Alert,
    AttributeValue,
    DeviceDescriptor,
    DeviceKind,
    DeviceState,
    attribute_spec,
)
from .simnet import Rng

LOCKOUT_THRESHOLD = 3  # consecutive login failures before a security alert


class GatewayError(Exception):
    pass


class JoinRejected(GatewayError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class AuthError(GatewayError):
    pass


class CommandError(GatewayError):
    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(message or code)


@dataclass
class Registration:
    descriptor: DeviceDescriptor
    registered_at: int
    status: str = "online"


@dataclass
class Session:
    token: str
    username: str
    expires_at: int


def _hash_password(username: str, password: str) -> str:
    return hashlib.sha256(f"{username}:{password}".encode()).hexdigest()


class Gateway:
    def __init__(self, join_secret: str, accounts: dict[str, str], rng: Rng,
                 now: Callable[[], int],
                 log: Callable[[str, dict], None],
                 route: Optional[Callable[[str, str, AttributeValue, str], bool]] = None,
                 session_ttl: int = 30 * 60 * 1_000_000_000):
        if not join_secret:
            raise GatewayError("join secret must be non-empty")
        self.join_secret = join_secret
        self._password_hashes = {u: _hash_password(u, p) for u, p in accounts.items()}
        self._rng = rng.derive("gateway/session")
        self.now = now
        self.log = log
        self.route = route
        self.session_ttl = session_ttl
        self.up = True
        self.directory: dict[str, Registration] = {}
        self.states: dict[str, DeviceState] = {}
        self.sessions: dict[str, Session] = {}
        self.alerts: list[Alert] = []
        self.alert_subscribers: list[Callable[[Alert], None]] = []
        self._names: set[str] = set()
        self._login_failures: dict[str, int] = {}
        self._next_ordinal = 1
        self.first_registration_at: Optional[int] = None

    # -- registration -------------------------------------------------------

    def handle_join(self, display_name: str, kind: DeviceKind, secret: str) -> Registration:
        if not hmac.compare_digest(secret.encode(), self.join_secret.encode()):
            self.log("lifecycle", {"event": "join_rejected", "display_name": display_name,
                                   "reason": "bad_secret"})
            self.record_alert(Alert(self.now(), "critical", "security", "gateway",
                                    f"join with bad secret: {display_name!r}"))
            raise JoinRejected("bad_secret")
        if display_name in self._names:
            self.log("lifecycle", {"event": "join_rejected", "display_name": display_name,
                                   "reason": "duplicate_name"})
            raise JoinRejected("duplicate_name")
        device_id = f"d-{self._next_ordinal:03d}"
        self._next_ordinal += 1
        descriptor = DeviceDescriptor(device_id, display_name, kind, f"home/{device_id}")
        registration = Registration(descriptor, self.now())
        self.directory[device_id] = registration
        self.states[device_id] = DeviceState(kind, DeviceState.initial(kind).attributes,
                                             last_update=self.now())
        self._names.add(display_name)
        if self.first_registration_at is None:
            self.first_registration_at = self.now()
        self.log("lifecycle", {"event": "registered", "descriptor": descriptor.to_json()})
        return registration

    def device_by_name(self, display_name: str) -> Optional[DeviceDescriptor]:
        for reg in self.directory.values():
            if reg.descriptor.display_name == display_name:
                return reg.descriptor
        return None

    # -- client sessions ----------------------------------------------------

    def authenticate_client(self, username: str, password: str) -> Session:
        expected = self._password_hashes.get(username)
        supplied = _hash_password(username, password)
        # unknown user and wrong password are indistinguishable to the caller
        if expected is None or not hmac.compare_digest(supplied, expected):
            failures = self._login_failures.get(username, 0) + 1
            self._login_failures[username] = failures
            self.log("lifecycle", {"event": "login_failed", "username": username})
            if failures % LOCKOUT_THRESHOLD == 0:
                self.log("lifecycle", {"event": "login_lockout", "username": username})
                self.record_alert(Alert(self.now(), "critical", "security", "gateway",
                                        f"login lockout: {failures} consecutive failures "
                                        f"for {username!r}"))
            raise AuthError("invalid credentials")
        self._login_failures[username] = 0
        token = self._rng.token_hex(16)
        session = Session(token, username, self.now() + self.session_ttl)
        self.sessions[token] = session
        self.log("lifecycle", {"event": "login", "username": username})
        return session

    def check_session(self, token: str) -> Session:
        session = self.sessions.get(token)
        if session is None:
            raise AuthError("invalid session")
        if self.now() >= session.expires_at:
            del self.sessions[token]
            raise AuthError("expired")
        return session

    # -- device access ------------------------------------------------------

    def list_devices(self, token: str) -> list[tuple[DeviceDescriptor, DeviceState]]:
        self.check_session(token)
        return [
            (self.directory[did].descriptor, self.states[did])
            for did in sorted(self.directory)
        ]

    def dispatch_command(self, token: str, device_id: str, attribute: str,
                         value: AttributeValue) -> str:
        """Validate and route a client command; returns 'delivered' or 'dropped'."""
        session = self.check_session(token)
        return self.dispatch(device_id, attribute, value, source=f"client:{session.username}")

    def dispatch(self, device_id: str, attribute: str, value: AttributeValue,
                 source: str) -> str:
        """Route a validated command from any source (rule engine, access, client)."""
        if device_id not in self.directory:
            raise CommandError("unknown device", f"no device {device_id!r}")
        kind = self.directory[device_id].descriptor.kind
        try:
            spec = attribute_spec(kind, attribute)
        except KeyError:
            raise CommandError("unknown attribute", f"{kind.value} has no {attribute!r}")
        if not spec.writable:
            raise CommandError("read-only", f"{kind.value}.{attribute} is read-only")
        if value.tag != spec.value_type or (
            value.tag == "number" and value.unit != spec.unit
        ):
            raise CommandError("type", f"{kind.value}.{attribute} expects {spec.value_type}")
        if self.route is None:
            raise CommandError("no route", "gateway has no transport attached")
        self.log("command", {"event": "issued", "device": device_id,
                             "attribute": attribute, "value": value.to_json(),
                             "source": source})
        delivered = self.route(device_id, attribute, value, source)
        return "delivered" if delivered else "dropped"

    # -- alerts -------------------------------------------------------------

    def record_alert(self, alert: Alert):
        self.alerts.append(alert)
        self.log("alert", alert.to_json())
        for subscriber in self.alert_subscribers:
            subscriber(alert)
