import json

import pytest

from hearth.domain import LogRecord, seconds
from hearth.persistence import (
    EventLog,
    IntegrityError,
    load_log,
    query_readings,
    replay,
    verify_access_log,
)


def _rec(seq, t, kind, payload):
    return LogRecord(seq, t, kind, payload)


def _registered(seq, t, device_id, name, kind):
    return _rec(seq, t, "lifecycle", {"event": "registered", "descriptor": {
        "id": device_id, "display_name": name, "kind": kind,
        "logical_address": f"home/{device_id}"}})


class TestEventLog:
    def test_append_enforces_contiguous_seq(self):
        log = EventLog()
        log.append(_rec(0, 0, "lifecycle", {"event": "run_start"}))
        with pytest.raises(IntegrityError):
            log.append(_rec(2, 0, "lifecycle", {}))

    def test_file_backed_round_trip(self, tmp_path):
        path = tmp_path / "run.jsonl"
        log = EventLog(path)
        records = [_rec(0, 0, "lifecycle", {"event": "run_start"}),
                   _rec(1, 5, "reading", {"device": "d-001", "attribute": "on",
                                          "value": True})]
        for record in records:
            log.append(record)
        log.close()
        assert load_log(path) == records

    def test_lines_are_single_canonical_json(self, tmp_path):
        path = tmp_path / "run.jsonl"
        log = EventLog(path)
        log.append(_rec(0, 0, "lifecycle", {"b": 1, "a": 2}))
        log.close()
        line = path.read_text().splitlines()[0]
        assert json.loads(line) == {"kind": "lifecycle", "payload": {"a": 2, "b": 1},
                                    "seq": 0, "t": 0}
        assert " " not in line


class TestLoadLog:
    def test_corrupt_line_names_position(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"kind":"lifecycle","payload":{},"seq":0,"t":0}\n{"broken\n')
        with pytest.raises(IntegrityError, match="seq 1"):
            load_log(path)

    def test_seq_gap_detected(self, tmp_path):
        path = tmp_path / "gap.jsonl"
        path.write_text('{"kind":"lifecycle","payload":{},"seq":0,"t":0}\n'
                        '{"kind":"lifecycle","payload":{},"seq":2,"t":1}\n')
        with pytest.raises(IntegrityError, match="gap"):
            load_log(path)

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "blank.jsonl"
        path.write_text('{"kind":"lifecycle","payload":{},"seq":0,"t":0}\n\n')
        assert len(load_log(path)) == 1


class TestReplay:
    def _base_records(self):
        return [
            _rec(0, 0, "lifecycle", {"event": "run_start"}),
            _registered(1, 0, "d-001", "light", "Light"),
        ]

    def test_rebuilds_directory_and_state(self):
        records = self._base_records() + [
            _rec(2, seconds(3), "command",
                 {"event": "applied", "device": "d-001", "attribute": "on",
                  "value": True, "source": "client:admin"}),
            _rec(3, seconds(10), "lifecycle", {"event": "run_end",
                                               "duration": seconds(10)}),
        ]
        result = replay(records)
        device = result.snapshot["devices"]["d-001"]
        assert device["descriptor"]["display_name"] == "light"
        assert device["state"]["attributes"]["on"] is True
        assert result.duration == seconds(10)

    def test_alert_counts_by_category(self):
        records = self._base_records() + [
            _rec(2, 1, "alert", {"time": 1, "severity": "critical",
                                 "category": "security", "source": "gateway",
                                 "message": "x"}),
            _rec(3, 2, "alert", {"time": 2, "severity": "warning",
                                 "category": "fire", "source": "gateway",
                                 "message": "y"}),
        ]
        assert replay(records).snapshot["alerts"] == {"fire": 1, "security": 1}

    def test_uptime_from_down_intervals(self):
        s = seconds(1)
        records = self._base_records() + [
            _rec(2, 500 * s, "lifecycle", {"event": "gateway_down"}),
            _rec(3, 505 * s, "lifecycle", {"event": "gateway_up"}),
            _rec(4, 1000 * s, "lifecycle", {"event": "run_end", "duration": 1000 * s}),
        ]
        assert replay(records).metrics.uptime_fraction == 0.995

    def test_latency_and_drops_recovered(self):
        records = self._base_records() + [
            _rec(2, 1, "message", {"event": "delivered", "latency": 3_000_000}),
            _rec(3, 2, "lifecycle", {"event": "message_dropped"}),
        ]
        metrics = replay(records).metrics
        assert metrics.latency_samples == [3_000_000]
        assert metrics.dropped_count == 1

    def test_attack_incidents_counted(self):
        records = self._base_records() + [
            _rec(2, 1, "lifecycle", {"event": "join_rejected", "reason": "bad_secret",
                                     "display_name": "rogue"}),
            _rec(3, 2, "lifecycle", {"event": "login_lockout", "username": "admin"}),
            _rec(4, 3, "lifecycle", {"event": "audit", "decision": "deny",
                                     "card_number": "9999", "portal": "garage",
                                     "reader": "d-009", "time": 3}),
            _rec(5, 4, "alert", {"time": 4, "severity": "critical",
                                 "category": "security", "source": "gateway",
                                 "message": "x"}),
        ]
        metrics = replay(records).metrics
        assert metrics.attack_incidents == 3
        assert metrics.attacks_detected == 1  # capped by observed security alerts

    def test_duplicate_value_does_not_bump_last_update(self):
        records = self._base_records() + [
            _rec(2, 5, "reading", {"device": "d-001", "attribute": "on", "value": False}),
        ]
        assert replay(records).snapshot["devices"]["d-001"]["state"]["last_update"] == 0


class TestQueryReadings:
    def test_window_and_filter(self):
        records = [
            _rec(0, seconds(1), "reading", {"device": "d-001", "attribute": "temperature",
                                            "value": {"value": 20.0, "unit": "C"}}),
            _rec(1, seconds(2), "reading", {"device": "d-002", "attribute": "temperature",
                                            "value": {"value": 99.0, "unit": "C"}}),
            _rec(2, seconds(3), "reading", {"device": "d-001", "attribute": "temperature",
                                            "value": {"value": 21.0, "unit": "C"}}),
            _rec(3, seconds(9), "reading", {"device": "d-001", "attribute": "temperature",
                                            "value": {"value": 30.0, "unit": "C"}}),
        ]
        series = query_readings(records, "d-001", "temperature", seconds(1), seconds(5))
        assert series.points == [(seconds(1), 20.0), (seconds(3), 21.0)]

    def test_invalid_window(self):
        with pytest.raises(ValueError):
            query_readings([], "d-001", "on", 5, 1)


class TestVerifyAccessLog:
    AUTO_CLOSE = seconds(30)

    def _records(self, events):
        records = [
            _rec(0, 0, "lifecycle", {"event": "run_start"}),
            _registered(1, 0, "d-001", "main_door", "Door"),
            _registered(2, 0, "d-002", "garage_door", "GarageDoor"),
        ]
        for t, kind, payload in events:
            records.append(_rec(len(records), t, kind, payload))
        return records

    def _allow(self, t, portal):
        return (t, "lifecycle", {"event": "audit", "decision": "allow",
                                 "card_number": "1001", "portal": portal,
                                 "reader": "d-009", "time": t})

    def _open(self, t, device, value, source="access"):
        return (t, "command", {"event": "applied", "device": device,
                               "attribute": "open", "value": value, "source": source})

    def test_clean_swipe_cycle(self):
        s = seconds(1)
        records = self._records([
            self._allow(10 * s, "main_door"),
            self._open(10 * s, "d-001", True),
            self._open(40 * s, "d-001", False),
            (100 * s, "lifecycle", {"event": "run_end", "duration": 100 * s}),
        ])
        assert verify_access_log(records, self.AUTO_CLOSE) == []

    def test_unauthorized_open_flagged(self):
        s = seconds(1)
        records = self._records([
            self._open(10 * s, "d-001", True),
            (100 * s, "lifecycle", {"event": "run_end", "duration": 100 * s}),
        ])
        violations = verify_access_log(records, self.AUTO_CLOSE)
        assert any("without authorization" in v for v in violations)

    def test_client_command_counts_as_authorization(self):
        s = seconds(1)
        records = self._records([
            self._open(10 * s, "d-001", True, source="client:admin"),
            self._open(20 * s, "d-001", False, source="client:admin"),
            (100 * s, "lifecycle", {"event": "run_end", "duration": 100 * s}),
        ])
        assert verify_access_log(records, self.AUTO_CLOSE) == []

    def test_overstayed_open_flagged_at_run_end(self):
        s = seconds(1)
        records = self._records([
            self._allow(10 * s, "garage"),
            self._open(10 * s, "d-002", True),
            (100 * s, "lifecycle", {"event": "run_end", "duration": 100 * s}),
        ])
        violations = verify_access_log(records, self.AUTO_CLOSE)
        assert any("still open" in v for v in violations)

    def test_reauthorization_extends_deadline(self):
        s = seconds(1)
        records = self._records([
            self._allow(10 * s, "garage"),
            self._open(10 * s, "d-002", True),
            self._allow(35 * s, "garage"),
            self._open(65 * s, "d-002", False),
            (100 * s, "lifecycle", {"event": "run_end", "duration": 100 * s}),
        ])
        assert verify_access_log(records, self.AUTO_CLOSE) == []
