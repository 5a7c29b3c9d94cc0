"""Run log and the evaluation quantities derived from it."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional

LOST = None


class NoTraffic(ValueError):
    """A ratio was requested over zero sent packets."""


@dataclass
class PutRecord:
    id: int
    producer: int
    send_us: int
    hops: int
    ack_us: Optional[int] = None
    received_us: Optional[int] = None

    @property
    def lost(self) -> bool:
        return self.ack_us is None

    @property
    def rtt(self) -> float:
        return math.inf if self.ack_us is None else self.ack_us - self.send_us


@dataclass
class NodeStats:
    node: int
    role: str = "router"
    tx_us: int = 0
    rx_us: int = 0
    frames_tx: int = 0
    frames_rx: int = 0
    dropped_adv_events: int = 0
    queue_drops: int = 0
    duplicates: int = 0
    ip_duplicates: int = 0
    put_duplicates: int = 0
    missed_pointers: int = 0
    aux_losses: int = 0
    no_route: int = 0
    noise_rx: int = 0
    adv_events: int = 0
    conn_events: int = 0
    conn_events_skipped: int = 0
    buffer_high_watermark: int = 0
    dedup_evictions: int = 0
    tx_by_kind: dict = field(default_factory=dict)
    tx_by_channel: dict = field(default_factory=dict)

    def count_tx(self, kind: str, channel: int, air: int) -> None:
        self.frames_tx += 1
        self.tx_us += air
        self.tx_by_kind[kind] = self.tx_by_kind.get(kind, 0) + 1
        self.tx_by_channel[channel] = self.tx_by_channel.get(channel, 0) + 1


COUNTER_FIELDS = [f.name for f in fields(NodeStats)
                  if f.name not in ("node", "role", "tx_by_kind", "tx_by_channel")]


class MetricsLog:
    """Append-only record of one run."""

    def __init__(self, n_nodes: int = 0, mode: str = "adv", topology: str = "star"):
        self.mode = mode
        self.topology = topology
        self.nodes = [NodeStats(i) for i in range(n_nodes)]
        self.puts: dict = {}
        self.duration_us = 0
        self.frames = {"transmitted": 0, "delivered": 0, "collided": 0, "unheard": 0}
        self.meta: dict = {}

    def node(self, index: int) -> NodeStats:
        return self.nodes[index]

    def put_sent(self, ident: int, producer: int, now: int, hops: int) -> None:
        if ident in self.puts:
            raise ValueError(f"PUT {ident} logged twice")
        self.puts[ident] = PutRecord(ident, producer, now, hops)

    def put_received(self, ident: int, now: int) -> None:
        rec = self.puts[ident]
        if rec.received_us is None:
            rec.received_us = now

    def put_acked(self, ident: int, now: int, timeout: int) -> None:
        rec = self.puts[ident]
        if rec.ack_us is None and now - rec.send_us <= timeout:
            rec.ack_us = now

    def records(self) -> list:
        return [self.puts[k] for k in sorted(self.puts)]


def pdr(log: MetricsLog) -> float:
    sent = len(log.puts)
    if sent == 0:
        raise NoTraffic("no PUTs were sent")
    acked = sum(1 for r in log.puts.values() if r.ack_us is not None)
    return acked / sent


def rtts(log: MetricsLog) -> list:
    """Round-trip times in us of all PUTs; lost ones are ``math.inf``."""
    return [r.rtt for r in log.records()]


def percentile(values, q: float) -> float:
    """Nearest-rank percentile of the finite values (NaN when there are none)."""
    finite = sorted(v for v in values if v != math.inf)
    if not finite:
        return math.nan
    rank = max(1, math.ceil(q / 100 * len(finite)))
    return finite[rank - 1]


def rtt_cdf(log: MetricsLog, resolution: int = 1000) -> list:
    """Empirical CDF of the RTT on a grid of ``resolution`` us.

    Lost packets count in the denominator only, so the last value equals
    :func:`pdr`.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    sent = len(log.puts)
    if sent == 0:
        raise NoTraffic("no PUTs were sent")
    finite = sorted(r.rtt for r in log.puts.values() if r.ack_us is not None)
    if not finite:
        return [(0, 0.0)]
    last = math.ceil(finite[-1] / resolution) * resolution
    out, i = [], 0
    for t in range(0, last + resolution, resolution):
        while i < len(finite) and finite[i] <= t:
            i += 1
        out.append((t, i / sent))
    return out


def radio_utilization(log: MetricsLog, node: int) -> tuple:
    st = log.nodes[node]
    if log.duration_us <= 0:
        return 0.0, 0.0
    return st.tx_us / log.duration_us, st.rx_us / log.duration_us


def lifetime_hours(duty: float, radio_current_ma: float, battery_mah: float) -> float:
    if duty <= 0:
        return math.inf
    return battery_mah / (duty * radio_current_ma)


def frame_totals(log: MetricsLog) -> dict:
    """Link-layer frames sent by all nodes, per frame kind and in total."""
    kinds: dict = {}
    for st in log.nodes:
        for kind, n in st.tx_by_kind.items():
            kinds[kind] = kinds.get(kind, 0) + n
    return {"topology": log.topology, "total": sum(st.frames_tx for st in log.nodes), "by_kind": kinds}


def rtt_clusters(values, bin_us: int = 5000) -> list:
    """Group finite RTTs into clusters of adjacent non-empty histogram bins.

    Returns ``(first_bin_start, last_bin_end, count)`` per cluster.
    """
    bins: dict = {}
    for v in values:
        if v != math.inf:
            b = int(v // bin_us)
            bins[b] = bins.get(b, 0) + 1
    clusters = []
    for b in sorted(bins):
        if clusters and clusters[-1][1] == b - 1:
            lo, _, n = clusters[-1]
            clusters[-1] = [lo, b, n + bins[b]]
        else:
            clusters.append([b, b, bins[b]])
    return [(lo * bin_us, (hi + 1) * bin_us, n) for lo, hi, n in clusters]


def summary(log: MetricsLog) -> dict:
    values = rtts(log)
    out = {
        "mode": log.mode,
        "topology": log.topology,
        "duration_us": log.duration_us,
        "sent": len(log.puts),
        "acked": sum(1 for r in log.puts.values() if not r.lost),
        "pdr": pdr(log) if log.puts else None,
        "rtt_p50_us": _num(percentile(values, 50)),
        "rtt_p90_us": _num(percentile(values, 90)),
        "rtt_p99_us": _num(percentile(values, 99)),
        "frames": dict(log.frames),
        "utilization": {},
    }
    for st in log.nodes:
        tx, rx = radio_utilization(log, st.node)
        out["utilization"][str(st.node)] = {"tx": tx, "rx": rx}
    return out


def _num(v):
    return None if isinstance(v, float) and math.isnan(v) else v
