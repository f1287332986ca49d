import pytest

from hearth.domain import AttributeValue, DeviceKind, LogRecord
from hearth.gateway import (
    AuthError,
    CommandError,
    Gateway,
    GatewayError,
    JoinRejected,
    LOCKOUT_THRESHOLD,
)
from hearth.simnet import Rng


class Harness:
    def __init__(self, route=None, **kwargs):
        self.t = 0
        self.records = []
        self.gateway = Gateway(
            "secret-1", {"admin": "pw"}, Rng(7), lambda: self.t,
            lambda kind, payload: self.records.append(LogRecord(len(self.records),
                                                                self.t, kind, payload)),
            route=route or (lambda *a: True), **kwargs)

    def events(self, name):
        return [r for r in self.records
                if r.kind == "lifecycle" and r.payload.get("event") == name]


class TestJoin:
    def test_sequential_ids_by_delivery_order(self):
        h = Harness()
        first = h.gateway.handle_join("light", DeviceKind.LIGHT, "secret-1")
        second = h.gateway.handle_join("siren", DeviceKind.SIREN, "secret-1")
        assert first.descriptor.id == "d-001"
        assert second.descriptor.id == "d-002"

    def test_bad_secret_rejected_with_alert(self):
        h = Harness()
        with pytest.raises(JoinRejected, match="bad_secret"):
            h.gateway.handle_join("rogue", DeviceKind.LIGHT, "wrong")
        assert len(h.gateway.alerts) == 1
        alert = h.gateway.alerts[0]
        assert alert.severity == "critical" and alert.category == "security"
        assert len(h.events("join_rejected")) == 1

    def test_duplicate_name_rejected_without_alert(self):
        h = Harness()
        h.gateway.handle_join("light", DeviceKind.LIGHT, "secret-1")
        with pytest.raises(JoinRejected, match="duplicate_name"):
            h.gateway.handle_join("light", DeviceKind.LIGHT, "secret-1")
        assert h.gateway.alerts == []

    def test_registration_logged_and_state_initialized(self):
        h = Harness()
        h.t = 5
        reg = h.gateway.handle_join("light", DeviceKind.LIGHT, "secret-1")
        assert h.gateway.states["d-001"].attributes["on"].value is False
        assert h.gateway.first_registration_at == 5
        logged = h.events("registered")[0].payload["descriptor"]
        assert logged["id"] == reg.descriptor.id

    def test_empty_join_secret_rejected_at_construction(self):
        with pytest.raises(GatewayError):
            Gateway("", {}, Rng(1), lambda: 0, lambda *a: None)


class TestSessions:
    def test_login_issues_token(self):
        h = Harness()
        session = h.gateway.authenticate_client("admin", "pw")
        assert h.gateway.check_session(session.token).username == "admin"

    def test_wrong_password_and_unknown_user_look_alike(self):
        h = Harness()
        with pytest.raises(AuthError) as bad_pw:
            h.gateway.authenticate_client("admin", "nope")
        with pytest.raises(AuthError) as no_user:
            h.gateway.authenticate_client("ghost", "nope")
        assert str(bad_pw.value) == str(no_user.value)

    def test_lockout_alert_on_every_third_consecutive_failure(self):
        h = Harness()
        for i in range(1, 7):
            with pytest.raises(AuthError):
                h.gateway.authenticate_client("admin", "nope")
            expected = i // LOCKOUT_THRESHOLD
            assert len(h.gateway.alerts) == expected

    def test_success_resets_failure_count(self):
        h = Harness()
        for _ in range(2):
            with pytest.raises(AuthError):
                h.gateway.authenticate_client("admin", "nope")
        h.gateway.authenticate_client("admin", "pw")
        with pytest.raises(AuthError):
            h.gateway.authenticate_client("admin", "nope")
        assert h.gateway.alerts == []

    def test_expired_session_rejected(self):
        h = Harness()
        session = h.gateway.authenticate_client("admin", "pw")
        h.t = h.gateway.session_ttl
        with pytest.raises(AuthError, match="expired"):
            h.gateway.check_session(session.token)

    def test_invalid_token_rejected(self):
        h = Harness()
        with pytest.raises(AuthError):
            h.gateway.check_session("bogus")

    def test_tokens_deterministic_per_seed(self):
        a, b = Harness(), Harness()
        ta = a.gateway.authenticate_client("admin", "pw").token
        tb = b.gateway.authenticate_client("admin", "pw").token
        assert ta == tb and len(ta) == 32


class TestCommands:
    def _gateway_with_light(self, route=None):
        h = Harness(route=route)
        h.gateway.handle_join("light", DeviceKind.LIGHT, "secret-1")
        token = h.gateway.authenticate_client("admin", "pw").token
        return h, token

    def test_dispatch_routes_and_logs(self):
        routed = []
        h, token = self._gateway_with_light(
            route=lambda did, attr, value, src: routed.append((did, attr)) or True)
        result = h.gateway.dispatch_command(token, "d-001", "on", AttributeValue(True))
        assert result == "delivered" and routed == [("d-001", "on")]
        issued = [r for r in h.records if r.kind == "command"]
        assert issued[0].payload["source"] == "client:admin"

    def test_dropped_route_reported(self):
        h, token = self._gateway_with_light(route=lambda *a: False)
        assert h.gateway.dispatch_command(token, "d-001", "on",
                                          AttributeValue(True)) == "dropped"

    def test_unknown_device(self):
        h, token = self._gateway_with_light()
        with pytest.raises(CommandError) as excinfo:
            h.gateway.dispatch_command(token, "d-999", "on", AttributeValue(True))
        assert excinfo.value.code == "unknown device"

    def test_unknown_attribute(self):
        h, token = self._gateway_with_light()
        with pytest.raises(CommandError) as excinfo:
            h.gateway.dispatch_command(token, "d-001", "bright", AttributeValue(True))
        assert excinfo.value.code == "unknown attribute"

    def test_read_only_attribute(self):
        h, token = self._gateway_with_light()
        h.gateway.handle_join("fm", DeviceKind.FIRE_MONITOR, "secret-1")
        with pytest.raises(CommandError) as excinfo:
            h.gateway.dispatch_command(token, "d-002", "fire", AttributeValue(True))
        assert excinfo.value.code == "read-only"

    def test_wrong_value_type(self):
        h, token = self._gateway_with_light()
        with pytest.raises(CommandError) as excinfo:
            h.gateway.dispatch_command(token, "d-001", "on", AttributeValue("yes"))
        assert excinfo.value.code == "type"

    def test_list_devices_sorted_and_authenticated(self):
        h, token = self._gateway_with_light()
        h.gateway.handle_join("siren", DeviceKind.SIREN, "secret-1")
        devices = h.gateway.list_devices(token)
        assert [d.id for d, _ in devices] == ["d-001", "d-002"]
        with pytest.raises(AuthError):
            h.gateway.list_devices("bogus")


class TestAlerts:
    def test_subscribers_notified(self):
        h = Harness()
        seen = []
        h.gateway.alert_subscribers.append(seen.append)
        with pytest.raises(JoinRejected):
            h.gateway.handle_join("rogue", DeviceKind.LIGHT, "wrong")
        assert len(seen) == 1 and seen[0] is h.gateway.alerts[0]
