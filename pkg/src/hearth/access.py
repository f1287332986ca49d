"""RFID access control for the main door and garage.

Card numbers are validated against a per-portal allow-list; allowed swipes open
the portal and arm an auto-close timer that resets on re-swipe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .domain import NS_PER_S, seconds

PORTALS = ("main_door", "garage")


class AccessError(Exception):
    pass


@dataclass(frozen=True)
class AccessPolicy:
    # card number -> portals that card may open
    allow_list: dict[str, frozenset[str]] = field(default_factory=dict)
    auto_close_after: int = seconds(30)

    def __post_init__(self):
        if self.auto_close_after <= 0:
            raise AccessError("auto_close_after must be > 0")
        for card, portals in self.allow_list.items():
            if not card or not card.isdigit():
                raise AccessError(f"card number {card!r} must be decimal digits")
            for portal in portals:
                if portal not in PORTALS:
                    raise AccessError(f"unknown portal {portal!r}")

    @staticmethod
    def from_json(obj: dict) -> "AccessPolicy":
        return AccessPolicy(
            {card: frozenset(portals) for card, portals in obj.get("allow_list", {}).items()},
            seconds(obj.get("auto_close_after_s", 30)),
        )


@dataclass(frozen=True)
class AuditEntry:
    time: int
    reader: str  # DeviceId
    card_number: str
    decision: str  # allow | deny
    portal: str

    def to_json(self) -> dict:
        return {
            "event": "audit",
            "time": self.time,
            "reader": self.reader,
            "card_number": self.card_number,
            "decision": self.decision,
            "portal": self.portal,
        }


def validate_card(card_number: str, portal: str, policy: AccessPolicy) -> str:
    """'allow' iff the card is enrolled for this portal; unknown cards deny."""
    if portal not in PORTALS:
        raise AccessError(f"unknown portal {portal!r}")
    if card_number in policy.allow_list and portal in policy.allow_list[card_number]:
        return "allow"
    return "deny"


class AccessController:
    """Swipe handling and auto-close timers, driven by the simulation engine.

    The host wires in the gateway (for alerts and command routing), the portal
    device ids, and a scheduler; expired timers call back into
    `auto_close_check` with the token they were armed with so a newer swipe
    invalidates older timers.
    """

    def __init__(self, policy: AccessPolicy, gateway, portal_devices: dict[str, str],
                 schedule, record_reading=None):
        self.policy = policy
        self.gateway = gateway
        self.portal_devices = portal_devices  # portal name -> DeviceId
        self.schedule = schedule  # (payload, delay_ns) -> event id
        self.record_reading = record_reading
        self._tokens: dict[str, int] = {p: 0 for p in portal_devices}
        self.audit_log: list[AuditEntry] = []

    def on_swipe(self, reader_id: str, card_number: str, portal: str) -> AuditEntry:
        from .domain import Alert, AttributeValue, DeviceKind

        registration = self.gateway.directory.get(reader_id)
        if registration is None or registration.descriptor.kind is not DeviceKind.RFID_READER:
            raise AccessError(f"{reader_id!r} is not a registered RFID reader")
        now = self.gateway.now()
        if self.record_reading:
            self.record_reading(reader_id, "last_card", AttributeValue(card_number))
        decision = validate_card(card_number, portal, self.policy)
        entry = AuditEntry(now, reader_id, card_number, decision, portal)
        self.audit_log.append(entry)
        self.gateway.log("lifecycle", entry.to_json())
        if decision == "allow":
            self.gateway.dispatch(self.portal_devices[portal], "open",
                                  AttributeValue(True), source="access")
            self.arm(portal)
        else:
            self.gateway.record_alert(Alert(now, "critical", "security", reader_id,
                                            f"unknown RFID card {card_number!r} at {portal}"))
        return entry

    def arm(self, portal: str):
        """(Re)start the auto-close countdown for a portal."""
        self._tokens[portal] += 1
        self.schedule(("auto_close", portal, self._tokens[portal]),
                      self.policy.auto_close_after)

    def auto_close_check(self, portal: str, token: int):
        from .domain import AttributeValue

        if token != self._tokens[portal]:
            return  # a newer swipe or command reset the timer
        device_id = self.portal_devices[portal]
        state = self.gateway.states.get(device_id)
        if state is not None and state.attributes["open"].value:
            self.gateway.dispatch(device_id, "open", AttributeValue(False), source="access")
