"""Deterministic smart-home simulator: gateway, rule engine, RFID access, event log."""

__version__ = "0.1.0"
