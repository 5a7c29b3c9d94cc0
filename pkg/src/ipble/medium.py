"""Single collision domain shared by every radio in a scenario.

Any temporal overlap of two frames on the same channel destroys both for
every listener (no capture effect).  There is no path loss: all nodes are in
range of each other.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional

from .core import BleAddress, is_data, is_primary

PHY_OVERHEAD = 10  # preamble 1, access address 4, header 2, CRC 3
BYTE_US = 8
MAX_PDU_PAYLOAD = 255

POINTER_PDU = 9
LEGACY_PDU = 37
EMPTY_PDU = 0
T_IFS = 150
AUX_OFFSET = 300
CHAIN_GAP = 300


class FrameKind(enum.IntEnum):
    EXT_IND = 0
    AUX_ADV = 1
    AUX_CHAIN = 2
    CONN_DATA = 3
    LEGACY_ADV = 4


class RadioBusy(RuntimeError):
    """A node was asked to transmit while its radio was still on air."""


def air_time(pdu_payload_len: int) -> int:
    if not 0 <= pdu_payload_len <= MAX_PDU_PAYLOAD:
        raise ValueError(f"PDU payload must be 0..{MAX_PDU_PAYLOAD} bytes, got {pdu_payload_len}")
    return (PHY_OVERHEAD + pdu_payload_len) * BYTE_US


class RadioFrame:
    __slots__ = ("sender", "channel", "t_start", "air_time", "kind", "directed_to",
                 "event_id", "chain_index", "payload", "collided", "resolved")

    def __init__(self, sender, channel: int, t_start: int, air_time: int, kind: FrameKind,
                 directed_to=None, event_id=None, chain_index: int = 0, payload=None):
        if kind in (FrameKind.EXT_IND, FrameKind.LEGACY_ADV):
            if not is_primary(channel):
                raise ValueError(f"{kind.name} frames use primary channels, not {channel}")
        elif not is_data(channel):
            raise ValueError(f"{kind.name} frames use data channels, not {channel}")
        self.sender = sender
        self.channel = channel
        self.t_start = t_start
        self.air_time = air_time
        self.kind = kind
        self.directed_to = directed_to
        self.event_id = event_id
        self.chain_index = chain_index
        self.payload = payload
        self.collided = False
        self.resolved = False

    @property
    def t_end(self) -> int:
        return self.t_start + self.air_time

    def __repr__(self):
        return (f"RadioFrame({self.kind.name} ch={self.channel} "
                f"[{self.t_start},{self.t_end}) from {self.sender})")


@dataclass
class RxLock:
    """A radio that held RX on one channel over [since, until)."""

    node: BleAddress
    channel: int
    since: int
    until: int

    @property
    def address(self):
        return self.node

    def hears(self, channel: int, start: int, end: int) -> bool:
        return channel == self.channel and self.since <= start and end <= self.until


class Medium:
    def __init__(self):
        self._on_air: dict = {}
        self._tx_until: dict = {}
        self.transmitted = 0
        self.delivered = 0
        self.collided = 0
        self.unheard = 0

    def transmit(self, frame: RadioFrame) -> None:
        """Register ``frame`` for [t_start, t_end) and mark any overlap as a collision.

        Frames may be registered ahead of their start time (a whole advertising
        train at once), but never after a frame they could overlap has been
        resolved.
        """
        busy = self._tx_until.get(frame.sender, -1)
        if frame.t_start < busy:
            raise RadioBusy(f"{frame.sender} transmits at {frame.t_start} but is on air until {busy}")
        self._tx_until[frame.sender] = frame.t_end
        frames = self._on_air.get(frame.channel)
        if frames is None:
            frames = self._on_air[frame.channel] = []
        start, end = frame.t_start, frame.t_start + frame.air_time
        keep = []
        for other in frames:
            if other.t_start + other.air_time <= start and other.resolved:
                continue
            if other.t_start < end and start < other.t_start + other.air_time:
                other.collided = True
                frame.collided = True
            keep.append(other)
        keep.append(frame)
        self._on_air[frame.channel] = keep
        self.transmitted += 1

    def resolve(self, frame: RadioFrame, listeners: Iterable) -> set:
        """Addresses that received ``frame``; call once, at or after its end time.

        ``listeners`` are objects with ``address`` and ``hears(channel, start, end)``.
        """
        delivered = set()
        if not frame.collided:
            target = frame.directed_to
            for node in listeners:
                addr = node.address
                if addr == frame.sender:
                    continue
                if target is not None and addr != target:
                    continue
                if node.hears(frame.channel, frame.t_start, frame.t_end):
                    delivered.add(addr)
        self.settle(frame, bool(delivered))
        return delivered

    def settle(self, frame: RadioFrame, delivered: bool) -> None:
        if frame.resolved:
            raise RuntimeError(f"{frame!r} resolved twice")
        frame.resolved = True
        if frame.collided:
            self.collided += 1
        elif delivered:
            self.delivered += 1
        else:
            self.unheard += 1

    def pending(self) -> list:
        return [f for frames in self._on_air.values() for f in frames if not f.resolved]

    def balanced(self) -> bool:
        return self.transmitted == self.delivered + self.collided + self.unheard
