"""Connection-based baseline MAC: one BLE connection per topology edge.

Connection events start at anchors spaced by an interval drawn anew from
[lo, hi] for every event.  Inside an event the coordinator and subordinate
alternate frames on a hopped data channel.  A frame leaves its FIFO only once
delivered, so link-layer loss is zero while connections stay up.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from math import ceil

from .core import MS, uniform_range
from .medium import EMPTY_PDU, T_IFS, FrameKind, RadioFrame, RxLock, air_time

DLE_PAYLOAD = 251
L2CAP_OVERHEAD = 4
EVENT_GUARD = 300
EMPTY_AIR = air_time(EMPTY_PDU)


class BufferOverflow(Exception):
    pass


@dataclass(frozen=True)
class ConnParams:
    interval_lo: int = 40 * MS
    interval_hi: int = 60 * MS
    event_budget: int = 8
    buffer_cap: int = 8900
    max_payload: int = DLE_PAYLOAD


def link_frames(ip_size: int, max_payload: int = DLE_PAYLOAD) -> list:
    """Payload sizes of the link frames carrying an ``ip_size`` datagram."""
    total = ip_size + L2CAP_OVERHEAD
    n = ceil(total / max_payload)
    return [max_payload] * (n - 1) + [total - max_payload * (n - 1)]


class LinkFrame:
    __slots__ = ("size", "data", "last")

    def __init__(self, size, data, last):
        self.size = size
        self.data = data
        self.last = last


class ConnRadio:
    """Per-node state shared by all connections of that node."""

    def __init__(self, sim, index: int, address, params: ConnParams):
        self.sim = sim
        self.index = index
        self.address = address
        self.params = params
        self.stats = sim.log.node(index)
        self.net = None
        self.in_event = None
        self.waiting: deque = deque()
        self.buffered = 0
        self.links: dict = {}

    def send(self, data: bytes, next_hop, dgram_id: int) -> None:
        conn = self.links.get(next_hop)
        if conn is None:
            self.stats.no_route += 1
            return
        try:
            conn.enqueue_ip_conn(self, data)
        except BufferOverflow:
            self.stats.queue_drops += 1

    def finalize(self, end: int) -> None:
        pass


class Connection:
    def __init__(self, sim, coordinator: ConnRadio, subordinate: ConnRadio, params: ConnParams, rng):
        self.sim = sim
        self.coord = coordinator
        self.sub = subordinate
        self.params = params
        self.rng = rng
        self.hop_increment = uniform_range(rng, 5, 16)
        self.channel = uniform_range(rng, 0, 36)
        self.queues = {coordinator: deque(), subordinate: deque()}
        self.anchor = None
        self.next_anchor = None
        self.pairs = 0
        self.events = 0
        self.anchor_seq = 0
        self.channel_use = [0] * 37
        coordinator.links[subordinate.address] = self
        subordinate.links[coordinator.address] = self

    def peer(self, radio: ConnRadio) -> ConnRadio:
        return self.sub if radio is self.coord else self.coord

    def start(self, first_anchor: int) -> None:
        self.next_anchor = first_anchor
        self.sim.at(first_anchor, self.run_conn_event)

    def enqueue_ip_conn(self, radio: ConnRadio, data: bytes) -> int:
        sizes = link_frames(len(data), self.params.max_payload)
        total = sum(sizes)
        if radio.buffered + total > self.params.buffer_cap:
            raise BufferOverflow(f"node {radio.index}: {radio.buffered}+{total} bytes exceed "
                                 f"{self.params.buffer_cap}")
        q = self.queues[radio]
        for i, n in enumerate(sizes):
            last = i == len(sizes) - 1
            q.append(LinkFrame(n, data if last else None, last))
        radio.buffered += total
        st = radio.stats
        if radio.buffered > st.buffer_high_watermark:
            st.buffer_high_watermark = radio.buffered
        return len(sizes)

    # -- connection events ------------------------------------------------

    def run_conn_event(self) -> None:
        sim = self.sim
        now = sim.now
        self.anchor = now
        self.anchor_seq += 1
        self.next_anchor = now + uniform_range(self.rng, self.params.interval_lo, self.params.interval_hi)
        sim.at(self.next_anchor, self.run_conn_event)
        self.channel = (self.channel + self.hop_increment) % 37
        self._try_start(self.anchor_seq)

    def _try_start(self, seq: int) -> None:
        """Start the pending event now, wait for a busy radio, or skip it if it no longer fits."""
        if seq != self.anchor_seq:
            return
        now = self.sim.now
        if now + 2 * EMPTY_AIR + T_IFS + EVENT_GUARD > self.next_anchor:
            self.coord.stats.conn_events_skipped += 1
            return
        for radio in (self.coord, self.sub):
            if radio.in_event is not None:
                # shared radio: this event starts late, once the other one is over
                radio.waiting.append((self, seq))
                return
        self.coord.in_event = self
        self.sub.in_event = self
        self.events += 1
        self.channel_use[self.channel] += 1
        self.coord.stats.conn_events += 1
        self.pairs = 0
        self._exchange()

    def _head_size(self, radio: ConnRadio) -> int:
        q = self.queues[radio]
        return q[0].size if q else EMPTY_PDU

    def _exchange(self) -> None:
        sim = self.sim
        t = sim.now
        c_air = air_time(self._head_size(self.coord))
        s_start = t + c_air + T_IFS
        s_air = air_time(self._head_size(self.sub))
        fc = RadioFrame(self.coord.address, self.channel, t, c_air, FrameKind.CONN_DATA,
                        self.sub.address, self, 0, self.coord)
        fs = RadioFrame(self.sub.address, self.channel, s_start, s_air, FrameKind.CONN_DATA,
                        self.coord.address, self, 1, self.sub)
        sim.medium.transmit(fc)
        sim.medium.transmit(fs)
        self.pairs += 1
        sim.at(fs.t_end, self._exchange_done, fc, fs)

    def _exchange_done(self, fc: RadioFrame, fs: RadioFrame) -> None:
        sim = self.sim
        for frame, sender in ((fc, self.coord), (fs, self.sub)):
            receiver = self.peer(sender)
            sender.stats.count_tx("conn_data", frame.channel, frame.air_time)
            receiver.stats.rx_us += frame.air_time
            lock = RxLock(receiver.address, frame.channel, frame.t_start, frame.t_end)
            delivered = sim.medium.resolve(frame, [lock])
            q = self.queues[sender]
            if delivered:
                receiver.stats.frames_rx += 1
                if frame.air_time > EMPTY_AIR:
                    lf = q.popleft()
                    sender.buffered -= lf.size
                    if lf.last and receiver.net is not None:
                        receiver.net.on_link_receive(lf.data, sender.address)
        now = sim.now
        more = self.queues[self.coord] or self.queues[self.sub]
        if more and self.pairs < self.params.event_budget:
            nxt = (now + T_IFS + air_time(self._head_size(self.coord)) + T_IFS
                   + air_time(self._head_size(self.sub)))
            if nxt + EVENT_GUARD <= self.next_anchor:
                sim.at(now + T_IFS, self._exchange)
                return
        self.coord.in_event = None
        self.sub.in_event = None
        for radio in (self.coord, self.sub):
            while radio.waiting and radio.in_event is None:
                conn, seq = radio.waiting.popleft()
                conn._try_start(seq)
