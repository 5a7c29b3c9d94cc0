"""IP layer: datagrams, static routes over a topology, forwarding and the
CoAP-like producer/consumer application.

CoAP is not encoded; a PUT and its empty ACK are fixed-size payloads.  On the
link every datagram carries ``payload_len + link_overhead`` bytes, standing in
for the compressed 6LoWPAN/L2CAP headers.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Optional

from .core import BleAddress, MS, S, uniform_range

IP_MTU = 1280
_HEADER = struct.Struct(">IBB")  # datagram id, kind, hop count


class DatagramKind(enum.IntEnum):
    DATA_PUT = 0
    EMPTY_ACK = 1


class NoRoute(LookupError):
    pass


@dataclass(frozen=True)
class IpDatagram:
    id: int
    origin: BleAddress
    destination: BleAddress
    payload_len: int
    kind: DatagramKind
    created_at: int
    acks: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.payload_len <= IP_MTU:
            raise ValueError(f"payload of {self.payload_len} bytes outside 0..{IP_MTU}")
        if self.kind is DatagramKind.EMPTY_ACK and self.acks is None:
            raise ValueError("an EmptyAck must reference the PUT it acknowledges")


def pack(dgram: IpDatagram, hops: int, size: int) -> bytes:
    """Link-level bytes of ``dgram``: a small header padded to ``size``."""
    head = _HEADER.pack(dgram.id & 0xFFFFFFFF, dgram.kind, min(hops, 255))
    if size < len(head):
        raise ValueError(f"on-air size {size} too small for the {len(head)}-byte header")
    return head + bytes(size - len(head))


def unpack(data: bytes) -> tuple:
    """Return ``(datagram id, kind, hop count)``."""
    ident, kind, hops = _HEADER.unpack_from(data)
    return ident, DatagramKind(kind), hops


@dataclass(frozen=True)
class TrafficSpec:
    interval: int = 1 * S
    put_payload: int = 100
    ack_payload: int = 8
    ack_timeout: int = 10 * S

    def __post_init__(self):
        if self.interval <= 0:
            raise ValueError("producer interval must be positive")
        if self.ack_timeout <= 0:
            raise ValueError("ack timeout must be positive")


class Topology:
    """Tree rooted at the consumer (node 0); ``parent[i]`` is i's next hop toward it."""

    def __init__(self, kind: str, parent: list):
        self.kind = kind
        self.parent = list(parent)
        if self.parent[0] is not None:
            raise ValueError("node 0 is the consumer and has no parent")
        self.children = [[] for _ in self.parent]
        for child, p in enumerate(self.parent):
            if p is not None:
                self.children[p].append(child)
        self.depth = [self._depth(i) for i in range(len(self.parent))]

    def _depth(self, node: int) -> int:
        d = 0
        seen = set()
        while self.parent[node] is not None:
            if node in seen:
                raise ValueError("topology contains a loop")
            seen.add(node)
            node = self.parent[node]
            d += 1
        return d

    def __len__(self) -> int:
        return len(self.parent)

    def edges(self) -> list:
        """(parent, child) pairs in child order."""
        return [(p, c) for c, p in enumerate(self.parent) if p is not None]

    def path_to_root(self, node: int) -> list:
        path = [node]
        while self.parent[path[-1]] is not None:
            path.append(self.parent[path[-1]])
        return path

    @classmethod
    def star(cls, n: int) -> "Topology":
        return cls("star", [None] + [0] * (n - 1))

    @classmethod
    def line(cls, n: int) -> "Topology":
        return cls("line", [None] + list(range(n - 1)))

    @classmethod
    def tree(cls, n: int, fanout: int = 2) -> "Topology":
        # breadth-first fill: 15 nodes give 2 + 4 + 8 nodes on hops 1..3
        return cls("tree", [None] + [(i - 1) // fanout for i in range(1, n)])

    @classmethod
    def build(cls, kind: str, n: int) -> "Topology":
        if n < 2:
            raise ValueError("a topology needs a consumer and at least one producer")
        try:
            return {"star": cls.star, "tree": cls.tree, "line": cls.line}[kind](n)
        except KeyError:
            raise ValueError(f"unknown topology {kind!r}") from None


class RouteTable:
    def __init__(self, routes: Optional[dict] = None):
        self._next = dict(routes or {})

    def add(self, destination, next_hop) -> None:
        self._next[destination] = next_hop

    def lookup(self, destination):
        try:
            return self._next[destination]
        except KeyError:
            raise NoRoute(f"no route to {destination}") from None

    def __len__(self):
        return len(self._next)

    @classmethod
    def for_node(cls, topo: Topology, node: int, addresses: list) -> "RouteTable":
        """Static routes: descendants via the child subtree they sit in, everything else via the parent."""
        table = cls()
        for child in topo.children[node]:
            stack = [child]
            while stack:
                d = stack.pop()
                table.add(addresses[d], addresses[child])
                stack.extend(topo.children[d])
        if topo.parent[node] is not None:
            up = addresses[topo.parent[node]]
            for other in range(len(topo)):
                if other != node and addresses[other] not in table._next:
                    table.add(addresses[other], up)
        return table


class NetNode:
    """IP layer and application of one node.

    ``mac`` must offer ``send(data: bytes, next_hop, dgram_id)``; it calls
    :meth:`on_link_receive` for every datagram it hands up.
    """

    def __init__(self, sim, index: int, address: BleAddress, routes: RouteTable,
                 traffic: TrafficSpec, overhead: int, consumer: BleAddress, rng):
        self.sim = sim
        self.index = index
        self.address = address
        self.routes = routes
        self.traffic = traffic
        self.overhead = overhead
        self.consumer = consumer
        self.rng = rng
        self.mac = None
        self.is_consumer = address == consumer
        self.is_producer = False
        self._seen = set()
        self._acked_puts = set()

    # -- forwarding -------------------------------------------------------

    def forward(self, dgram: IpDatagram, hops: int) -> None:
        stats = self.sim.log.node(self.index)
        try:
            next_hop = self.routes.lookup(dgram.destination)
        except NoRoute:
            stats.no_route += 1
            return
        size = dgram.payload_len + self.overhead
        self.mac.send(pack(dgram, hops + 1, size), next_hop, dgram.id)

    def on_link_receive(self, data: bytes, link_src) -> None:
        ident, kind, hops = unpack(data)
        stats = self.sim.log.node(self.index)
        if ident in self._seen:
            stats.ip_duplicates += 1
        else:
            self._seen.add(ident)
        dgram = self.sim.datagrams[ident]
        if dgram.destination == self.address:
            if kind is DatagramKind.DATA_PUT:
                self.consumer_on_put(dgram, hops)
            else:
                self.producer_on_ack(dgram)
        else:
            self.forward(dgram, hops)

    # -- application ------------------------------------------------------

    def start_producer(self, stop_at: int) -> None:
        self.is_producer = True
        self._stop_at = stop_at
        first = uniform_range(self.rng, 0, self.traffic.interval - 1)
        self.sim.at(self.sim.now + first, self.producer_tick)

    def producer_tick(self) -> None:
        now = self.sim.now
        if now >= self._stop_at:
            return
        dgram = self.sim.new_datagram(self.address, self.consumer, self.traffic.put_payload,
                                      DatagramKind.DATA_PUT)
        self.sim.log.put_sent(dgram.id, self.index, now, self.sim.hops_of(self.index))
        self.forward(dgram, 0)
        half = self.traffic.interval // 2
        nxt = now + self.traffic.interval + uniform_range(self.rng, -half, half)
        self.sim.at(max(nxt, now + 1), self.producer_tick)

    def consumer_on_put(self, dgram: IpDatagram, hops: int) -> None:
        if dgram.id in self._acked_puts:
            self.sim.log.node(self.index).put_duplicates += 1
        else:
            self._acked_puts.add(dgram.id)
            self.sim.log.put_received(dgram.id, self.sim.now)
        ack = self.sim.new_datagram(self.address, dgram.origin, self.traffic.ack_payload,
                                    DatagramKind.EMPTY_ACK, acks=dgram.id)
        self.forward(ack, 0)

    def producer_on_ack(self, dgram: IpDatagram) -> None:
        self.sim.log.put_acked(dgram.acks, self.sim.now, self.traffic.ack_timeout)
