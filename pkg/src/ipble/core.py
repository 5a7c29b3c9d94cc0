"""Shared vocabulary: simulated time, BLE addresses, channels and seeded RNG streams.

All times are integer microseconds since the start of a run.  At the BLE
1 Mbit/s PHY one byte takes exactly 8 us on air, so every air time and
schedule offset in the simulator is an exact integer.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

US = 1
MS = 1_000
S = 1_000_000

PRIMARY_CHANNELS = (37, 38, 39)
DATA_CHANNELS = tuple(range(37))


def ms(value: float) -> int:
    return int(round(value * MS))


def seconds(value: float) -> int:
    return int(round(value * S))


def is_primary(channel: int) -> bool:
    return channel in PRIMARY_CHANNELS


def is_data(channel: int) -> bool:
    return 0 <= channel <= 36


@dataclass(frozen=True, order=True)
class BleAddress:
    """A 6-octet BLE device address."""

    octets: bytes

    def __post_init__(self):
        if len(self.octets) != 6:
            raise ValueError(f"BLE address must be 6 octets, got {len(self.octets)}")

    @classmethod
    def for_node(cls, index: int) -> "BleAddress":
        # locally administered static address, node index in the low octets
        if not 0 <= index < 0xFFFF:
            raise ValueError(f"node index out of range: {index}")
        return cls(bytes([0xC2, 0x00, 0x00, 0x00, index >> 8, index & 0xFF]))

    @classmethod
    def parse(cls, text: str) -> "BleAddress":
        parts = text.split(":")
        if len(parts) != 6:
            raise ValueError(f"malformed BLE address: {text!r}")
        return cls(bytes(int(p, 16) for p in parts))

    @property
    def is_broadcast(self) -> bool:
        return self == BROADCAST

    def __str__(self) -> str:
        return ":".join(f"{b:02x}" for b in self.octets)


BROADCAST = BleAddress(b"\xff" * 6)


def check_unique(addresses) -> None:
    """Reject duplicate addresses and any use of the reserved broadcast address."""
    seen = set()
    for addr in addresses:
        if addr == BROADCAST:
            raise ValueError("the broadcast address cannot be assigned to a node")
        if addr in seen:
            raise ValueError(f"duplicate BLE address {addr}")
        seen.add(addr)


def make_rng(seed: int, stream: int) -> random.Random:
    """Independent generator for one (seed, stream) pair.

    String seeds are hashed with SHA-512 by ``random.Random``, so the draw
    sequence is identical across runs and platforms.  Each node uses its
    index as stream id; adding a node never perturbs the others.
    """
    return random.Random(f"ipble:{seed}:{stream}")


def uniform_range(rng: random.Random, lo: int, hi: int) -> int:
    """Uniform integer duration in the closed interval [lo, hi]."""
    if lo > hi:
        raise ValueError(f"empty range [{lo}, {hi}]")
    if lo == hi:
        return lo
    return rng.randint(lo, hi)
