"""Advertising Data (AD) encoding of IP payloads and aux-chain fragmentation.

Byte layout of one AD segment::

    [length(1) | type(1) = 0x16 | uuid(2, little endian) | data(<= 252)]

``length`` counts type + uuid + data.  The data stream spread over the
segments is the 1-octet sequence number followed by the IP payload; every
segment but the last carries exactly 252 data bytes.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import ceil
from typing import Optional, Sequence

AD_TYPE_SERVICE_DATA_16 = 0x16
SEGMENT_DATA = 252
SEGMENT_OVERHEAD = 4
DEFAULT_UUID = 0xFEED
DEFAULT_MTU = 1280
AUX_CAPACITY = 245
AUX_HEADER = 10
MAX_CHAIN = 10


class CodecError(Exception):
    pass


class PayloadTooLarge(CodecError):
    pass


class MalformedBlock(CodecError):
    pass


class NoIpSegments(CodecError):
    pass


class ChainOverflow(CodecError):
    pass


class ReassemblyIncomplete(CodecError):
    pass


@dataclass(frozen=True)
class AdBlock:
    data: bytes
    seq: int
    ip_len: int

    @property
    def size(self) -> int:
        return len(self.data)

    @property
    def segments(self) -> int:
        return segment_count(self.ip_len)


@dataclass(frozen=True)
class AuxPlan:
    sizes: tuple
    data_channel: Optional[int] = None

    @property
    def frames(self) -> int:
        return len(self.sizes)

    def slices(self, block: bytes) -> list:
        out, pos = [], 0
        for n in self.sizes:
            out.append(block[pos:pos + n])
            pos += n
        return out


def segment_count(ip_len: int) -> int:
    return ceil((ip_len + 1) / SEGMENT_DATA)


def block_size(ip_len: int) -> int:
    return SEGMENT_OVERHEAD * segment_count(ip_len) + ip_len + 1


def encode(payload: bytes, seq: int, uuid: int = DEFAULT_UUID, mtu: int = DEFAULT_MTU) -> AdBlock:
    if len(payload) > mtu:
        raise PayloadTooLarge(f"IP payload of {len(payload)} bytes exceeds MTU {mtu}")
    if not 0 <= seq <= 0xFF:
        raise ValueError(f"sequence number must fit one octet: {seq}")
    stream = bytes([seq]) + bytes(payload)
    head = bytes([AD_TYPE_SERVICE_DATA_16, uuid & 0xFF, (uuid >> 8) & 0xFF])
    out = bytearray()
    for pos in range(0, len(stream), SEGMENT_DATA):
        chunk = stream[pos:pos + SEGMENT_DATA]
        out.append(len(head) + len(chunk))
        out += head
        out += chunk
    return AdBlock(bytes(out), seq, len(payload))


def decode(block: bytes, expected_uuid: int = DEFAULT_UUID) -> tuple:
    """Return ``(seq, ip_payload)``; foreign AD segments are skipped."""
    stream = bytearray()
    matched = False
    pos = 0
    while pos < len(block):
        length = block[pos]
        if length == 0:
            raise MalformedBlock(f"zero-length AD segment at offset {pos}")
        end = pos + 1 + length
        if end > len(block):
            raise MalformedBlock(f"segment at offset {pos} overruns block ({end} > {len(block)})")
        if (length >= 3 and block[pos + 1] == AD_TYPE_SERVICE_DATA_16
                and block[pos + 2] | (block[pos + 3] << 8) == expected_uuid):
            stream += block[pos + 4:end]
            matched = True
        pos = end
    if not matched or not stream:
        raise NoIpSegments("no service-data segment carries the expected UUID")
    return stream[0], bytes(stream[1:])


def plan_aux(block, aux_capacity: int = AUX_CAPACITY, max_chain: int = MAX_CHAIN,
             data_channel: Optional[int] = None) -> AuxPlan:
    if aux_capacity < 1:
        raise ValueError("aux capacity must be at least one byte")
    block_len = block.size if isinstance(block, AdBlock) else int(block)
    frames = max(1, ceil(block_len / aux_capacity))
    if frames > max_chain:
        raise ChainOverflow(f"{block_len} bytes need {frames} chained frames, limit is {max_chain}")
    sizes = [aux_capacity] * (frames - 1) + [block_len - aux_capacity * (frames - 1)]
    return AuxPlan(tuple(sizes), data_channel)


def reassemble(frames: Sequence[Optional[bytes]]) -> bytes:
    if not frames or any(f is None for f in frames):
        missing = [i for i, f in enumerate(frames) if f is None]
        raise ReassemblyIncomplete(f"missing aux frames {missing}")
    return b"".join(frames)
