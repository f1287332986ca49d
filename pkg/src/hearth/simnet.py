"""Deterministic discrete-event engine: virtual clock, scheduler, lossy message
transport with sampled latency, and run metrics.

The PRNG is splitmix64-seeded xoshiro256**; every implementation detail here is
fixed so that identical (scenario, seed) inputs replay byte-identically.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .domain import NS_PER_MS, ms

MASK64 = (1 << 64) - 1


def _splitmix64(state: int):
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Rng:
    """xoshiro256** seeded via splitmix64 from a 64-bit seed."""

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        s = self.seed
        self._s = []
        for _ in range(4):
            s, out = _splitmix64(s)
            self._s.append(out)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def derive(self, label: str) -> "Rng":
        """Domain-separated child generator (e.g. for session tokens)."""
        h = self.seed
        for b in label.encode():
            h, out = _splitmix64(h ^ b)
            h ^= out
        return Rng(h)

    def token_hex(self, nbytes: int = 16) -> str:
        out = b""
        while len(out) < nbytes:
            out += self.next_u64().to_bytes(8, "big")
        return out[:nbytes].hex()


class SimError(Exception):
    pass


@dataclass(frozen=True)
class SimEvent:
    id: int
    fire_at: int
    target: str  # DeviceId, "gateway" or "environment"
    payload: Any


@dataclass(frozen=True)
class Message:
    src: str
    dst: str
    kind: str  # join | join_ack | reading | command | ack | alert
    payload: Any
    send_time: int
    deliver_time: Optional[int] = None  # None while in flight / dropped


MESSAGE_KINDS = ("join", "join_ack", "reading", "command", "ack", "alert")


@dataclass(frozen=True)
class NetConfig:
    latency_base: int = ms(2)  # ns
    latency_jitter: int = ms(6)  # ns
    loss_probability: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.latency_base <= 0:
            raise SimError("latency_base must be > 0")
        if self.latency_jitter < 0:
            raise SimError("latency_jitter must be >= 0")
        if not (0.0 <= self.loss_probability < 1.0):
            raise SimError("loss_probability must be in [0, 1)")


@dataclass(frozen=True)
class MetricsTargets:
    uptime_min: float = 0.99
    latency_p99_max: int = ms(10)


@dataclass
class RunMetrics:
    uptime_fraction: float = 1.0
    latency_samples: list[int] = field(default_factory=list)
    dropped_count: int = 0
    alert_count_by_category: dict[str, int] = field(default_factory=dict)
    time_to_first_registration: Optional[int] = None
    attack_incidents: int = 0
    attacks_detected: int = 0

    def record_latency(self, latency: int):
        self.latency_samples.append(latency)

    def record_alert(self, category: str):
        self.alert_count_by_category[category] = (
            self.alert_count_by_category.get(category, 0) + 1
        )


class Engine:
    """Single-threaded virtual-time event loop.

    Simultaneous events fire in ascending event-id order; the clock only moves
    forward, jumping to the earliest pending fire_at on each step.
    """

    def __init__(self):
        self.now = 0
        self._queue: list[tuple[int, int, SimEvent]] = []
        self._next_id = 0
        self._cancelled: set[int] = set()

    def schedule(self, payload: Any, delay: int, target: str = "environment") -> int:
        if delay < 0:
            raise SimError("delay must be >= 0")
        event = SimEvent(self._next_id, self.now + delay, target, payload)
        self._next_id += 1
        heapq.heappush(self._queue, (event.fire_at, event.id, event))
        return event.id

    def cancel(self, event_id: int):
        self._cancelled.add(event_id)

    def peek_time(self) -> Optional[int]:
        while self._queue and self._queue[0][1] in self._cancelled:
            self._cancelled.discard(self._queue[0][1])
            heapq.heappop(self._queue)
        return self._queue[0][0] if self._queue else None

    def step(self) -> Optional[tuple[int, list[SimEvent]]]:
        """Advance to the next event time; returns None when idle."""
        t = self.peek_time()
        if t is None:
            return None
        self.now = t
        fired = []
        while self._queue and self._queue[0][0] == t:
            _, eid, event = heapq.heappop(self._queue)
            if eid in self._cancelled:
                self._cancelled.discard(eid)
                continue
            fired.append(event)
        return t, fired


def sample_latency(cfg: NetConfig, rng: Rng) -> int:
    """latency_base + u * latency_jitter, u uniform in [0, 1)."""
    return cfg.latency_base + int(rng.next_float() * cfg.latency_jitter)


class Network:
    """Lossy wireless medium between gateway and devices.

    Delivery is scheduled on the engine as a SimEvent targeting the recipient;
    each delivered message's latency feeds RunMetrics.
    """

    def __init__(self, engine: Engine, cfg: NetConfig, rng: Rng, metrics: RunMetrics,
                 on_drop: Optional[Callable[[Message], None]] = None,
                 record_on_send: bool = True):
        self.engine = engine
        self.cfg = cfg
        self.rng = rng
        self.metrics = metrics
        self.on_drop = on_drop
        # hosts that log deliveries themselves record latency there instead,
        # so in-flight messages at the horizon never skew replay equality
        self.record_on_send = record_on_send

    def send(self, src: str, dst: str, kind: str, payload: Any) -> Optional[Message]:
        """Returns the delivered Message (with deliver_time) or None if dropped."""
        if src == dst:
            raise SimError("message src and dst must differ")
        if kind not in MESSAGE_KINDS:
            raise SimError(f"unknown message kind {kind!r}")
        send_time = self.engine.now
        if self.cfg.loss_probability > 0 and self.rng.next_float() < self.cfg.loss_probability:
            self.metrics.dropped_count += 1
            dropped = Message(src, dst, kind, payload, send_time, None)
            if self.on_drop:
                self.on_drop(dropped)
            return None
        latency = sample_latency(self.cfg, self.rng)
        msg = Message(src, dst, kind, payload, send_time, send_time + latency)
        self.engine.schedule(("deliver", msg), latency, target=dst)
        if self.record_on_send:
            self.metrics.record_latency(latency)
        return msg


def uptime_fraction(down_intervals: list[tuple[int, int]], horizon: int) -> float:
    """Fraction of the horizon spent outside scripted down intervals."""
    if horizon <= 0:
        raise SimError("horizon must be > 0")
    spans = sorted(down_intervals)
    prev_end = None
    total_down = 0
    for start, end in spans:
        if start < 0 or end > horizon or end < start:
            raise SimError(f"down interval ({start}, {end}) outside [0, horizon]")
        if prev_end is not None and start < prev_end:
            raise SimError("down intervals overlap")
        total_down += end - start
        prev_end = end
    return (horizon - total_down) / horizon


def percentile_nearest_rank(samples: list[int], p: float) -> int:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample."""
    if not samples:
        raise SimError("no samples")
    ordered = sorted(samples)
    rank = max(1, math.ceil(p / 100.0 * len(ordered)))
    return ordered[rank - 1]


def run_report(metrics: RunMetrics, targets: MetricsTargets = MetricsTargets()) -> dict:
    """Pass/fail report against the uptime and latency targets."""
    report: dict[str, Any] = {
        "uptime": {
            "fraction": metrics.uptime_fraction,
            "target_min": targets.uptime_min,
            "status": "PASS" if metrics.uptime_fraction >= targets.uptime_min else "FAIL",
        },
        "alerts_by_category": dict(sorted(metrics.alert_count_by_category.items())),
        "dropped_messages": metrics.dropped_count,
        "time_to_first_registration_ns": metrics.time_to_first_registration,
    }
    if metrics.latency_samples:
        report["latency"] = {
            "samples": len(metrics.latency_samples),
            "p50_ms": percentile_nearest_rank(metrics.latency_samples, 50) / NS_PER_MS,
            "p95_ms": percentile_nearest_rank(metrics.latency_samples, 95) / NS_PER_MS,
            "p99_ms": percentile_nearest_rank(metrics.latency_samples, 99) / NS_PER_MS,
            "target_p99_max_ms": targets.latency_p99_max / NS_PER_MS,
            "status": "PASS"
            if percentile_nearest_rank(metrics.latency_samples, 99) < targets.latency_p99_max
            else "FAIL",
        }
    else:
        report["latency"] = {"samples": 0, "status": "not measured"}
    if metrics.attack_incidents:
        report["attack_detection"] = {
            "incidents": metrics.attack_incidents,
            "detected": metrics.attacks_detected,
            "rate": metrics.attacks_detected / metrics.attack_incidents,
        }
    report["all_targets_pass"] = (
        report["uptime"]["status"] == "PASS"
        and report["latency"]["status"] != "FAIL"
    )
    return report


def report_text(report: dict) -> str:
    """Plain-text table rendering of a run report."""
    lines = []
    up = report["uptime"]
    lines.append(f"{'uptime_fraction':28} {up['fraction']:.6f}  (>= {up['target_min']})  {up['status']}")
    lat = report["latency"]
    if lat["samples"]:
        lines.append(f"{'latency_samples':28} {lat['samples']}")
        lines.append(f"{'latency_p50_ms':28} {lat['p50_ms']:.3f}")
        lines.append(f"{'latency_p95_ms':28} {lat['p95_ms']:.3f}")
        lines.append(
            f"{'latency_p99_ms':28} {lat['p99_ms']:.3f}  (< {lat['target_p99_max_ms']:.0f})  {lat['status']}"
        )
    else:
        lines.append(f"{'latency':28} not measured")
    lines.append(f"{'dropped_messages':28} {report['dropped_messages']}")
    for cat, n in report["alerts_by_category"].items():
        lines.append(f"{'alerts.' + cat:28} {n}")
    if "attack_detection" in report:
        ad = report["attack_detection"]
        lines.append(f"{'attack_detection_rate':28} {ad['rate']:.2f}  ({ad['detected']}/{ad['incidents']})")
    ttfr = report["time_to_first_registration_ns"]
    lines.append(
        f"{'time_to_first_registration':28} "
        + (f"{ttfr / NS_PER_MS:.3f} ms" if ttfr is not None else "not measured")
    )
    lines.append(f"{'all_targets_pass':28} {report['all_targets_pass']}")
    return "\n".join(lines)
