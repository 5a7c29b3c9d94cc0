"""Connection-less MAC: IP datagrams carried in extended advertising events.

Each datagram becomes one advertising instance that runs ``retransmissions + 1``
events.  An event is three pointer frames on channels 37, 38 and 39 followed by
the aux chain on a random data channel.  Between events every node scans
continuously, rotating over the primary channels; a received pointer commits
the single radio to the referenced aux chain.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import count
from typing import Optional

from . import codec
from .core import MS, PRIMARY_CHANNELS, uniform_range
from .dedup import DedupTable, Verdict
from .medium import (AUX_OFFSET, CHAIN_GAP, POINTER_PDU, T_IFS, FrameKind, RadioFrame,
                     air_time)

POINTER_AIR = air_time(POINTER_PDU)
_event_ids = count()


class QueueOverflow(Exception):
    pass


@dataclass(frozen=True)
class AdvParams:
    adv_interval: int = 50 * MS
    retransmissions: int = 2
    jitter_max: int = 10 * MS
    setup_delay: int = 1 * MS
    max_instances: int = 10
    link_queue: int = 4
    aux_capacity: int = codec.AUX_CAPACITY
    max_chain: int = codec.MAX_CHAIN
    scan_rotation: int = 30 * MS
    radio_switch: int = 150
    dedup_capacity: int = 32
    service_uuid: int = codec.DEFAULT_UUID
    mtu: int = codec.DEFAULT_MTU


class AdvInstance:
    __slots__ = ("block", "plan", "remaining", "next_event_at", "directed_to", "dgram_id",
                 "attempts", "token", "serial")

    def __init__(self, block, plan, remaining, directed_to, dgram_id, serial=0):
        self.serial = serial
        self.block = block
        self.plan = plan
        self.remaining = remaining
        self.next_event_at = None
        self.directed_to = directed_to
        self.dgram_id = dgram_id
        self.attempts = 0
        self.token = 0

    @property
    def seq(self) -> int:
        return self.block.seq


class AdvEvent:
    """One advertising event on air: pointer train plus aux chain."""

    __slots__ = ("id", "sender", "channel", "aux_start", "chain_end", "aux_frames",
                 "receivers", "directed_to")

    def __init__(self, sender, channel, directed_to):
        self.id = next(_event_ids)
        self.sender = sender
        self.channel = channel
        self.directed_to = directed_to
        self.aux_start = 0
        self.chain_end = 0
        self.aux_frames = []
        self.receivers = []


def pointer_train(t0: int) -> list:
    """(channel, start) of the three pointer copies of an event starting at t0."""
    step = POINTER_AIR + T_IFS
    return [(ch, t0 + i * step) for i, ch in enumerate(PRIMARY_CHANNELS)]


def aux_layout(t0: int, sizes) -> list:
    """(start, air time) of each aux frame of an event starting at t0."""
    t = pointer_train(t0)[-1][1] + POINTER_AIR + AUX_OFFSET
    out = []
    for n in sizes:
        air = air_time(n + codec.AUX_HEADER)
        out.append((t, air))
        t += air + CHAIN_GAP
    return out


def first_event_latency(setup_delay: int, aux_sizes) -> int:
    """Enqueue-to-delivery time of a datagram received in its first event."""
    start, air = aux_layout(0, aux_sizes)[-1]
    return setup_delay + start + air


class AdvMac:
    def __init__(self, sim, index: int, address, params: AdvParams, rng):
        self.sim = sim
        self.index = index
        self.address = address
        self.params = params
        self.rng = rng
        self.stats = sim.log.node(index)
        self.net = None
        self.dedup = DedupTable(params.dedup_capacity)
        self.instances: list = []
        self.queue: deque = deque()
        self.ready: list = []
        self._dispatch_pending = False
        self._seq = 0
        self._serial = 0
        # radio
        self.phase = uniform_range(rng, 0, params.scan_rotation - 1)
        self.tx_start = -1
        self.tx_end = -1        # last frame of the current train
        self.tx_until = -1      # tx_end plus the switch back to RX
        self.win_prev = (-1, -1, -1)
        self.win_cur = (-1, -1, -1)
        self.committed_event = None
        self.committed_until = -1
        self.deaf_us = 0

    # -- transmit side ----------------------------------------------------

    def send(self, data: bytes, next_hop, dgram_id: int) -> None:
        self.enqueue_ip(data, None if next_hop.is_broadcast else next_hop, dgram_id)

    def enqueue_ip(self, data: bytes, directed_to=None, dgram_id: Optional[int] = None) -> None:
        p = self.params
        startable = self._can_start(directed_to)
        if not startable and len(self.queue) >= p.link_queue:
            self.stats.queue_drops += 1
            raise_or_log(self.sim, QueueOverflow(f"node {self.index}: link queue full"))
            return
        block = codec.encode(data, self._seq, p.service_uuid, p.mtu)
        self._seq = (self._seq + 1) & 0xFF
        plan = codec.plan_aux(block, p.aux_capacity, p.max_chain)
        # serial orders simultaneous instances like the sequence number would without wraparound
        inst = AdvInstance(block, plan, p.retransmissions + 1, directed_to, dgram_id, self._serial)
        self._serial += 1
        if startable:
            self._activate(inst)
        else:
            self.queue.append(inst)

    def _can_start(self, directed_to) -> bool:
        """A free instance slot and no running instance the same receiver would also hear.

        Interleaving two datagrams toward one neighbor would defeat the
        equality-only duplicate filter there, so they are serialized.
        """
        if len(self.instances) >= self.params.max_instances:
            return False
        for other in self.instances:
            if directed_to is None or other.directed_to is None or other.directed_to == directed_to:
                return False
        return True

    def _promote(self) -> None:
        i = 0
        while i < len(self.queue) and len(self.instances) < self.params.max_instances:
            inst = self.queue[i]
            if self._can_start(inst.directed_to):
                del self.queue[i]
                self._activate(inst)
            else:
                i += 1

    def _activate(self, inst: AdvInstance) -> None:
        self.instances.append(inst)
        self._schedule(inst, self.sim.now + self.params.setup_delay)

    def _schedule(self, inst: AdvInstance, when: int) -> None:
        inst.next_event_at = when
        inst.token += 1
        self.sim.at(when, self._due, inst, inst.token)

    def _due(self, inst: AdvInstance, token: int) -> None:
        if token != inst.token:
            return
        self.ready.append(inst)
        if not self._dispatch_pending:
            # runs after every other event due at this instant, so simultaneous
            # instances are ordered by sequence number
            self._dispatch_pending = True
            self.sim.at(self.sim.now, self._dispatch)

    def _dispatch(self) -> None:
        self._dispatch_pending = False
        now = self.sim.now
        if not self.ready or now < self.tx_end:
            return
        if self.receiving(now):
            for inst in sorted(self.ready, key=_seq_key):
                self._finish_event(inst, dropped=True)
            self.ready.clear()
            return
        inst = min(self.ready, key=_seq_key)
        self.ready.remove(inst)
        self.run_adv_event(inst)

    def receiving(self, now: int) -> bool:
        return self.committed_until > now

    def run_adv_event(self, inst: AdvInstance) -> str:
        """Put one advertising event of ``inst`` on air, or drop it if the radio is receiving."""
        sim = self.sim
        now = sim.now
        if self.receiving(now):
            self._finish_event(inst, dropped=True)
            return "dropped"
        channel = self.rng.randrange(37)
        ev = AdvEvent(self, channel, inst.directed_to)
        medium = sim.medium
        st = self.stats
        for ch, t in pointer_train(now):
            f = RadioFrame(self.address, ch, t, POINTER_AIR, FrameKind.EXT_IND,
                           inst.directed_to, ev, 0, ev)
            medium.transmit(f)
            st.count_tx("ext_ind", ch, POINTER_AIR)
            sim.at(t + POINTER_AIR, sim.resolve_pointer, f)
        slices = inst.plan.slices(inst.block.data)
        for i, ((t, air), data) in enumerate(zip(aux_layout(now, inst.plan.sizes), slices)):
            kind = FrameKind.AUX_ADV if i == 0 else FrameKind.AUX_CHAIN
            f = RadioFrame(self.address, channel, t, air, kind, inst.directed_to, ev, i, data)
            medium.transmit(f)
            st.count_tx("aux_adv" if i == 0 else "aux_chain", channel, air)
            ev.aux_frames.append(f)
        first = ev.aux_frames[0]
        last = ev.aux_frames[-1]
        ev.aux_start = first.t_start
        ev.chain_end = last.t_end
        self.tx_start = now
        self.tx_end = ev.chain_end
        self.tx_until = ev.chain_end + self.params.radio_switch
        self.deaf_us += self.tx_until - now
        st.adv_events += 1
        sim.at(ev.chain_end, self._chain_end, ev)
        sim.at(ev.chain_end, self._train_done)
        self._finish_event(inst, dropped=False)
        return "completed"

    def _finish_event(self, inst: AdvInstance, dropped: bool) -> None:
        if dropped:
            self.stats.dropped_adv_events += 1
        inst.attempts += 1
        inst.remaining -= 1
        if inst.remaining > 0:
            p = self.params
            base = self.sim.now
            self._schedule(inst, base + p.adv_interval + uniform_range(self.rng, 0, p.jitter_max))
        else:
            self.instances.remove(inst)
            self._promote()

    def _train_done(self) -> None:
        if self.ready and not self._dispatch_pending:
            self._dispatch_pending = True
            self.sim.at(self.sim.now, self._dispatch)

    # -- receive side -----------------------------------------------------

    def hears(self, channel: int, start: int, end: int) -> bool:
        if self.tx_start < end and start < self.tx_until:
            return False
        if channel >= 37:
            for a, b, _ in (self.win_prev, self.win_cur):
                if a < end and start < b:
                    return False
            period = self.params.scan_rotation
            s = start + self.phase
            slot = s // period
            if slot != (end - 1 + self.phase) // period:
                return False
            if s - slot * period < self.params.radio_switch:
                return False
            return PRIMARY_CHANNELS[slot % 3] == channel
        for a, b, ch in (self.win_prev, self.win_cur):
            if ch == channel and a <= start and end <= b:
                return True
        return False

    def on_pointer(self, frame: RadioFrame) -> None:
        ev = frame.payload
        self.stats.frames_rx += 1
        now = self.sim.now
        if self.committed_until > now:
            if self.committed_event is not ev:
                self.stats.missed_pointers += 1
            return
        sw = self.params.radio_switch
        self.win_prev = self.win_cur
        self.win_cur = (ev.aux_start - sw, ev.chain_end + sw, ev.channel)
        self.deaf_us += 2 * sw
        self.committed_event = ev
        self.committed_until = ev.chain_end
        ev.receivers.append(self)

    def _chain_end(self, ev: AdvEvent) -> None:
        """Resolve the aux chain of ``ev`` (runs on the sender) and hand results to the receivers."""
        medium = self.sim.medium
        got = {r.address: [] for r in ev.receivers}
        for f in ev.aux_frames:
            delivered = medium.resolve(f, ev.receivers)
            for r in ev.receivers:
                got[r.address].append(f.payload if r.address in delivered else None)
        for r in ev.receivers:
            if r.committed_event is ev:
                r.committed_event = None
            r.on_chain(ev, got[r.address])

    def on_chain(self, ev: AdvEvent, frames: list) -> None:
        st = self.stats
        st.frames_rx += sum(1 for f in frames if f is not None)
        try:
            block = codec.reassemble(frames)
        except codec.ReassemblyIncomplete:
            st.aux_losses += 1
            return
        try:
            seq, payload = codec.decode(block, self.params.service_uuid)
        except codec.CodecError:
            st.aux_losses += 1
            return
        verdict = self.dedup.check_and_update(ev.sender.address, seq)
        st.dedup_evictions = self.dedup.evictions
        if verdict is Verdict.DUPLICATE:
            st.duplicates += 1
            return
        if self.net is not None:
            self.net.on_link_receive(payload, ev.sender.address)

    def finalize(self, end: int) -> None:
        p = self.params
        rotations = end // p.scan_rotation
        deaf = self.deaf_us + rotations * p.radio_switch
        self.stats.rx_us = max(0, end - deaf)


def _seq_key(inst: AdvInstance):
    return inst.serial


def raise_or_log(sim, exc: Exception) -> None:
    if getattr(sim, "strict", False):
        raise exc
