"""Deterministic discrete-event engine and scenario configuration."""
from __future__ import annotations

import heapq
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from itertools import count
from typing import Callable, Optional

from .adv import AdvMac, AdvParams
from .conn import Connection, ConnParams, ConnRadio
from .core import MS, S, BleAddress, check_unique, make_rng, uniform_range
from .medium import LEGACY_PDU, T_IFS, FrameKind, Medium, RadioFrame, air_time
from .metrics import MetricsLog
from .net import DatagramKind, IpDatagram, NetNode, RouteTable, Topology, TrafficSpec

NOISE_STREAM = 10_000
CONN_STREAM = 20_000


class InvalidConfig(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    """Background legacy advertisers on the primary channels."""

    advertisers: int = 0
    interval_ms: float = 100.0
    payload: int = LEGACY_PDU


@dataclass(frozen=True)
class TrafficConfig:
    interval_s: float = 1.0
    put_payload: int = 100
    ack_payload: int = 8
    ack_timeout_s: float = 10.0


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = "adv"
    topology: str = "star"
    nodes: int = 15
    producers: Optional[int] = None
    duration_s: float = 60.0
    seed: int = 1
    adv_interval_ms: float = 50.0
    retransmissions: int = 2
    conn_interval_ms: tuple = (40.0, 60.0)
    link_overhead: int = 10
    setup_delay_ms: float = 1.0
    max_instances: int = 10
    link_queue: int = 4
    aux_capacity: int = 245
    max_chain: int = 10
    scan_rotation_ms: float = 30.0
    radio_switch_us: int = 150
    dedup_capacity: int = 32
    service_uuid: int = 0xFEED
    mtu: int = 1280
    event_budget: int = 8
    buffer_cap: int = 8900
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def validate(self) -> None:
        def bad(msg):
            raise InvalidConfig(msg)

        if self.mode not in ("adv", "conn"):
            bad(f"mode must be 'adv' or 'conn', not {self.mode!r}")
        if self.topology not in ("star", "tree", "line"):
            bad(f"topology must be star, tree or line, not {self.topology!r}")
        if self.nodes < 2:
            bad("a scenario needs at least 2 nodes")
        if self.producers is not None and not 0 <= self.producers <= self.nodes - 1:
            bad(f"producers must be between 0 and {self.nodes - 1}")
        for name in ("duration_s", "adv_interval_ms", "scan_rotation_ms"):
            if getattr(self, name) <= 0:
                bad(f"{name} must be positive")
        if self.traffic.interval_s <= 0 or self.traffic.ack_timeout_s <= 0:
            bad("traffic interval and ack timeout must be positive")
        lo, hi = self.conn_interval_ms
        if not 0 < lo <= hi:
            bad(f"conn_interval_ms must satisfy 0 < lo <= hi, got [{lo}, {hi}]")
        if self.retransmissions < 0:
            bad("retransmissions cannot be negative")
        if self.setup_delay_ms < 0 or self.radio_switch_us < 0:
            bad("delays cannot be negative")
        for name in ("max_instances", "aux_capacity", "max_chain", "dedup_capacity",
                     "event_budget", "buffer_cap", "mtu"):
            if getattr(self, name) < 1:
                bad(f"{name} must be at least 1")
        if self.link_queue < 0:
            bad("link_queue cannot be negative")
        if self.mtu > 1280:
            bad("mtu above 1280 is not supported")
        for name in ("put_payload", "ack_payload"):
            size = getattr(self.traffic, name) + self.link_overhead
            if getattr(self.traffic, name) < 0 or size < 6 or size > self.mtu:
                bad(f"traffic.{name} plus link_overhead must lie in 6..{self.mtu} bytes")
        if self.radio_switch_us * 2 > self.scan_rotation_ms * MS:
            bad("radio_switch_us is too long for the scan rotation period")
        if self.noise.advertisers < 0 or self.noise.interval_ms <= 0:
            bad("noise advertisers must be >= 0 with a positive interval")
        if not 0 <= self.noise.payload <= 37:
            bad("legacy advertising PDU payload is limited to 37 bytes")
        if not 0 <= self.service_uuid <= 0xFFFF:
            bad("service_uuid must be a 16-bit value")

    def with_param(self, name: str, value) -> "ScenarioConfig":
        """Copy with one (possibly dotted, e.g. ``traffic.interval_s``) field replaced."""
        head, _, rest = name.partition(".")
        if head not in {f.name for f in fields(self)}:
            raise InvalidConfig(f"unknown parameter {name!r}")
        if rest:
            sub = getattr(self, head)
            if rest not in {f.name for f in fields(sub)}:
                raise InvalidConfig(f"unknown parameter {name!r}")
            return replace(self, **{head: replace(sub, **{rest: value})})
        return replace(self, **{head: value})


class EventQueue:
    """Pending events ordered by (time, insertion number)."""

    def __init__(self):
        self._heap: list = []
        self._count = count()

    def push(self, time: int, fn: Callable, args: tuple) -> None:
        heapq.heappush(self._heap, (time, next(self._count), fn, args))

    def pop(self):
        return heapq.heappop(self._heap)

    def peek_time(self):
        return self._heap[0][0] if self._heap else None

    def __len__(self):
        return len(self._heap)


class NoiseSource:
    """Legacy advertiser: three frames on 37/38/39 every interval + 0..10 ms."""

    def __init__(self, sim, address: BleAddress, spec: NoiseSpec, rng):
        self.sim = sim
        self.address = address
        self.interval = int(round(spec.interval_ms * MS))
        self.air = air_time(spec.payload)
        self.rng = rng

    def start(self) -> None:
        self.sim.at(uniform_range(self.rng, 0, self.interval - 1), self.fire)

    def fire(self) -> None:
        sim = self.sim
        t = sim.now
        frames = []
        for ch in (37, 38, 39):
            f = RadioFrame(self.address, ch, t, self.air, FrameKind.LEGACY_ADV)
            sim.medium.transmit(f)
            frames.append(f)
            t += self.air + T_IFS
        sim.at(frames[-1].t_end, sim.resolve_noise, frames)
        nxt = sim.now + self.interval + uniform_range(self.rng, 0, 10 * MS)
        if nxt < sim.end:
            sim.at(nxt, self.fire)


class Simulator:
    def __init__(self, cfg: ScenarioConfig, strict: bool = False):
        cfg.validate()
        self.cfg = cfg
        self.strict = strict
        self.now = 0
        self.queue = EventQueue()
        self.medium = Medium()
        self.topology = Topology.build(cfg.topology, cfg.nodes)
        self.log = MetricsLog(cfg.nodes, cfg.mode, cfg.topology)
        self.datagrams: dict = {}
        self._ids = count(1)
        self.duration = int(round(cfg.duration_s * S))
        self.traffic_end = self.duration
        self.ack_timeout = int(round(cfg.traffic.ack_timeout_s * S))
        self.end = self.duration + self.ack_timeout
        self.addresses = [BleAddress.for_node(i) for i in range(cfg.nodes)]
        check_unique(self.addresses)
        self.nets: list = []
        self.macs: list = []
        self.connections: list = []
        self.noise: list = []
        self._build()

    # -- construction -----------------------------------------------------

    def _build(self) -> None:
        cfg = self.cfg
        traffic = TrafficSpec(
            interval=int(round(cfg.traffic.interval_s * S)),
            put_payload=cfg.traffic.put_payload,
            ack_payload=cfg.traffic.ack_payload,
            ack_timeout=self.ack_timeout,
        )
        consumer = self.addresses[0]
        rngs = [make_rng(cfg.seed, i) for i in range(cfg.nodes)]
        for i, addr in enumerate(self.addresses):
            routes = RouteTable.for_node(self.topology, i, self.addresses)
            self.nets.append(NetNode(self, i, addr, routes, traffic, cfg.link_overhead, consumer, rngs[i]))
        if cfg.mode == "adv":
            params = AdvParams(
                adv_interval=int(round(cfg.adv_interval_ms * MS)),
                retransmissions=cfg.retransmissions,
                setup_delay=int(round(cfg.setup_delay_ms * MS)),
                max_instances=cfg.max_instances,
                link_queue=cfg.link_queue,
                aux_capacity=cfg.aux_capacity,
                max_chain=cfg.max_chain,
                scan_rotation=int(round(cfg.scan_rotation_ms * MS)),
                radio_switch=cfg.radio_switch_us,
                dedup_capacity=cfg.dedup_capacity,
                service_uuid=cfg.service_uuid,
                mtu=cfg.mtu,
            )
            for i, addr in enumerate(self.addresses):
                self.macs.append(AdvMac(self, i, addr, params, rngs[i]))
        else:
            lo, hi = cfg.conn_interval_ms
            params = ConnParams(int(round(lo * MS)), int(round(hi * MS)), cfg.event_budget,
                                cfg.buffer_cap)
            for i, addr in enumerate(self.addresses):
                self.macs.append(ConnRadio(self, i, addr, params))
            for k, (parent, child) in enumerate(self.topology.edges()):
                rng = make_rng(cfg.seed, CONN_STREAM + child)
                conn = Connection(self, self.macs[parent], self.macs[child], params, rng)
                self.connections.append(conn)
        for net, mac in zip(self.nets, self.macs):
            net.mac = mac
            mac.net = net
        for j in range(cfg.noise.advertisers):
            addr = BleAddress(bytes([0xC6, 0xFF, 0x00, 0x00, j >> 8, j & 0xFF]))
            self.noise.append(NoiseSource(self, addr, cfg.noise, make_rng(cfg.seed, NOISE_STREAM + j)))
        check_unique(self.addresses + [n.address for n in self.noise])
        n_prod = cfg.nodes - 1 if cfg.producers is None else cfg.producers
        self.producers = list(range(1, 1 + n_prod))
        for i, st in enumerate(self.log.nodes):
            st.role = "consumer" if i == 0 else ("producer" if i in self.producers else "router")

    def start(self) -> None:
        for i in self.producers:
            self.nets[i].start_producer(self.traffic_end)
        for conn in self.connections:
            conn.start(uniform_range(conn.rng, 0, conn.params.interval_hi))
        for src in self.noise:
            src.start()

    # -- services used by nodes -------------------------------------------

    def at(self, time: int, fn: Callable, *args) -> None:
        if time < self.now:
            raise ValueError(f"cannot schedule at {time}, now is {self.now}")
        self.queue.push(time, fn, args)

    def new_datagram(self, origin, destination, payload_len, kind: DatagramKind, acks=None) -> IpDatagram:
        d = IpDatagram(next(self._ids), origin, destination, payload_len, kind, self.now, acks)
        self.datagrams[d.id] = d
        return d

    def hops_of(self, node: int) -> int:
        return self.topology.depth[node]

    def resolve_pointer(self, frame: RadioFrame) -> None:
        if frame.directed_to is not None:
            listeners = [self.macs[self._index_of(frame.directed_to)]]
        else:
            listeners = self.macs
        for addr in self.medium.resolve(frame, listeners):
            self.macs[self._index_of(addr)].on_pointer(frame)

    def resolve_noise(self, frames: list) -> None:
        listeners = self.macs if self.cfg.mode == "adv" else []
        for f in frames:
            for addr in self.medium.resolve(f, listeners):
                self.log.node(self._index_of(addr)).noise_rx += 1

    def _index_of(self, addr: BleAddress) -> int:
        return (addr.octets[4] << 8) | addr.octets[5]

    # -- main loop --------------------------------------------------------

    def run(self) -> MetricsLog:
        self.start()
        q = self.queue
        end = self.end
        while q:
            t, _, fn, args = q.pop()
            if t > end:
                break
            self.now = t
            fn(*args)
        self.now = end
        return self.finalize()

    def finalize(self) -> MetricsLog:
        for f in self.medium.pending():
            self.medium.settle(f, False)
        for mac in self.macs:
            mac.finalize(self.end)
        log = self.log
        log.duration_us = self.end
        m = self.medium
        log.frames = {"transmitted": m.transmitted, "delivered": m.delivered,
                      "collided": m.collided, "unheard": m.unheard}
        if not m.balanced():
            raise AssertionError(f"frame conservation violated: {log.frames}")
        log.meta = {"seed": self.cfg.seed, "mode": self.cfg.mode, "topology": self.cfg.topology,
                    "producers": len(self.producers)}
        return log


def run(cfg: ScenarioConfig) -> MetricsLog:
    return Simulator(cfg).run()


def sweep(template: ScenarioConfig, parameter: str, values: list, workers: int = 1) -> list:
    """One run per value; run i uses seed ``template.seed + i``."""
    cfgs = [template.with_param(parameter, v).with_param("seed", template.seed + i)
            for i, v in enumerate(values)]
    for c in cfgs:
        c.validate()
    if workers <= 1 or len(cfgs) == 1:
        return [run(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, cfgs))
