import pytest
from fastapi.testclient import TestClient

from hearth.api import PacedRunner, create_app
from hearth.cli import resolve_scenario_path
from hearth.domain import seconds
from hearth.home import HomeSimulation, Scenario


class ManualRunner(PacedRunner):
    """Advances virtual time only when told to, no pacing thread."""

    def start(self):
        with self.lock:
            self.sim.start()

    def advance(self, t_s):
        with self.lock:
            self.sim.advance_to(seconds(t_s))


@pytest.fixture
def api():
    scenario = Scenario.load(resolve_scenario_path("demo-home"), duration_s=600)
    runner = ManualRunner(HomeSimulation(scenario))
    runner.start()
    runner.advance(2)  # let every device register
    client = TestClient(create_app(runner))
    return client, runner


def _login(client, username="admin", password="sesame-7"):
    response = client.post("/session", json={"username": username, "password": password})
    assert response.status_code == 200
    token = response.json()["token"]
    return {"Authorization": f"Bearer {token}"}


class TestSession:
    def test_login_and_authorized_list(self, api):
        client, _ = api
        headers = _login(client)
        response = client.get("/devices", headers=headers)
        assert response.status_code == 200
        assert len(response.json()) == 16

    def test_bad_credentials_401(self, api):
        client, _ = api
        assert client.post("/session", json={"username": "admin",
                                             "password": "x"}).status_code == 401

    def test_missing_token_401(self, api):
        client, _ = api
        assert client.get("/devices").status_code == 401
        assert client.get("/devices",
                          headers={"Authorization": "Bearer junk"}).status_code == 401


class TestDevices:
    def test_detail_includes_numeric_series(self, api):
        client, runner = api
        headers = _login(client)
        runner.advance(30)
        devices = client.get("/devices", headers=headers).json()
        thermostat = next(d for d in devices
                          if d["descriptor"]["kind"] == "Thermostat")
        detail = client.get(f"/devices/{thermostat['descriptor']['id']}",
                            headers=headers).json()
        assert len(detail["series"]) > 0
        assert all(isinstance(v, float) for _, v in detail["series"])

    def test_unknown_device_404(self, api):
        client, _ = api
        assert client.get("/devices/d-999", headers=_login(client)).status_code == 404

    def test_command_round_trip_visible_in_state(self, api):
        client, runner = api
        headers = _login(client)
        devices = client.get("/devices", headers=headers).json()
        light = next(d for d in devices if d["descriptor"]["kind"] == "Light")
        did = light["descriptor"]["id"]
        response = client.post(f"/devices/{did}/command",
                               json={"attribute": "on", "value": True},
                               headers=headers)
        assert response.json() == {"result": "delivered"}
        runner.advance(3)  # past network latency
        detail = client.get(f"/devices/{did}", headers=headers).json()
        assert detail["state"]["attributes"]["on"] is True

    def test_invalid_command_400_with_code(self, api):
        client, _ = api
        headers = _login(client)
        response = client.post("/devices/d-001/command",
                               json={"attribute": "nope", "value": True},
                               headers=headers)
        assert response.status_code == 400
        assert response.json()["detail"] == "unknown attribute"


class TestSwipeAndAlerts:
    def test_allowed_swipe_opens_portal(self, api):
        client, runner = api
        headers = _login(client)
        response = client.post("/swipe", json={"reader": "rfid_reader",
                                               "card_number": "1001",
                                               "portal": "main_door"},
                               headers=headers)
        body = response.json()
        assert body["decision"] == "allow"
        runner.advance(5)
        detail = client.get(f"/devices/{body['portal_device']}", headers=headers).json()
        assert detail["state"]["attributes"]["open"] is True

    def test_denied_swipe_raises_alert(self, api):
        client, _ = api
        headers = _login(client)
        before = client.get("/alerts", headers=headers).json()
        client.post("/swipe", json={"reader": "rfid_reader", "card_number": "9999",
                                    "portal": "garage"}, headers=headers)
        after = client.get("/alerts", headers=headers).json()
        assert len(after) == len(before) + 1
        assert after[-1]["category"] == "security"

    def test_alerts_since_resumes_without_loss(self, api):
        client, _ = api
        headers = _login(client)
        for card in ("7777", "8888"):
            client.post("/swipe", json={"reader": "rfid_reader", "card_number": card,
                                        "portal": "garage"}, headers=headers)
        all_alerts = client.get("/alerts", headers=headers).json()
        assert len(all_alerts) >= 2
        cut = all_alerts[-2]["seq"]
        resumed = client.get(f"/alerts?since={cut}", headers=headers).json()
        assert [a["seq"] for a in resumed] == \
            [a["seq"] for a in all_alerts if a["seq"] > cut]


class TestStimulusAndMetrics:
    def test_fire_stimulus_drives_response(self, api):
        client, runner = api
        headers = _login(client)
        assert client.post("/stimulus", json={"action": "fire_start"},
                           headers=headers).json() == {"ok": True}
        runner.advance(10)
        devices = client.get("/devices", headers=headers).json()
        by_kind = {d["descriptor"]["kind"]: d["state"]["attributes"] for d in devices}
        assert by_kind["FireSprinkler"]["on"] is True
        assert by_kind["Siren"]["on"] is True
        assert by_kind["Window"]["open"] is True
        alerts = client.get("/alerts", headers=headers).json()
        assert any(a["category"] == "fire" for a in alerts)

    def test_unknown_stimulus_400(self, api):
        client, _ = api
        response = client.post("/stimulus", json={"action": "flood"},
                               headers=_login(client))
        assert response.status_code == 400

    def test_stimuli_can_be_disabled(self, api):
        _, runner = api
        client = TestClient(create_app(runner, stimuli_enabled=False))
        response = client.post("/stimulus", json={"action": "fire_start"},
                               headers=_login(client))
        assert response.status_code == 403

    def test_metrics_report_shape(self, api):
        client, runner = api
        runner.advance(60)
        report = client.get("/metrics", headers=_login(client)).json()
        assert report["uptime"]["status"] == "PASS"
        assert report["latency"]["status"] == "PASS"
        assert "all_targets_pass" in report
