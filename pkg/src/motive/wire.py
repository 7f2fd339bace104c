"""Beacon wire codec.

Bit-exact layout is documented in docs/wire.md. All integers are
little-endian, floats are IEEE-754 binary64, strings are UTF-8 with a u16
length prefix. Encoding is canonical: equal beacons give identical bytes.
"""

from __future__ import annotations

import struct

from motive.errors import InvalidDescriptor, InvalidPlan, MalformedBeacon, OversizeBeacon
from motive.mobility import Segment, TrajectoryPlan
from motive.services import Beacon, ServiceDescriptor, ServiceKind, Unit

MAGIC = b"MB"
VERSION = 1
MAX_BEACON_BYTES = 1024

_HEADER = struct.Struct("<2sBQQ")      # magic, version, sender, tick
_COUNT = struct.Struct("<H")
_DESC = struct.Struct("<BBQIH")        # kind, unit, price, min_duration, name_len
_HORIZON = struct.Struct("<d")
_SEGMENT = struct.Struct("<ddddd")     # start, px, py, vx, vy

_KIND_TAGS = {ServiceKind.DATA_TOPIC: 0, ServiceKind.NAMED_FUNCTION: 1}
_UNIT_TAGS = {Unit.PER_CHUNK: 0, Unit.PER_TASK: 1}
_KINDS = {v: k for k, v in _KIND_TAGS.items()}
_UNITS = {v: k for k, v in _UNIT_TAGS.items()}

U16_MAX = 0xFFFF
U32_MAX = 0xFFFF_FFFF
U64_MAX = 0xFFFF_FFFF_FFFF_FFFF


def encoded_size(b: Beacon) -> int:
    """Byte length of ``encode_beacon(b)`` without building it."""
    n = _HEADER.size + 2 * _COUNT.size + _HORIZON.size + _COUNT.size
    for d in (*b.provided, *b.required):
        n += _DESC.size + len(d.name.encode("utf-8"))
    n += _SEGMENT.size * len(b.claimed_plan.segments)
    return n


def _check_range(value: int, hi: int, what: str) -> None:
    if not 0 <= value <= hi:
        raise InvalidDescriptor(f"{what}={value} does not fit the wire format")


def _encode_descriptors(out: bytearray, descs) -> None:
    _check_range(len(descs), U16_MAX, "descriptor count")
    out += _COUNT.pack(len(descs))
    for d in descs:
        name = d.name.encode("utf-8")
        _check_range(len(name), U16_MAX, "name length")
        _check_range(d.price_per_unit, U64_MAX, "price_per_unit")
        _check_range(d.min_duration, U32_MAX, "min_duration")
        out += _DESC.pack(_KIND_TAGS[d.kind], _UNIT_TAGS[d.unit], d.price_per_unit, d.min_duration, len(name))
        out += name


def encode_beacon(b: Beacon, max_bytes: int = MAX_BEACON_BYTES) -> bytes:
    size = encoded_size(b)
    if size > max_bytes:
        raise OversizeBeacon(f"beacon needs {size} bytes, limit is {max_bytes}")
    _check_range(b.sender, U64_MAX, "sender")
    _check_range(b.tick, U64_MAX, "tick")
    segs = b.claimed_plan.segments
    _check_range(len(segs), U16_MAX, "segment count")
    out = bytearray(_HEADER.pack(MAGIC, VERSION, b.sender, b.tick))
    _encode_descriptors(out, b.provided)
    _encode_descriptors(out, b.required)
    out += _HORIZON.pack(b.claimed_plan.horizon)
    out += _COUNT.pack(len(segs))
    for s in segs:
        out += _SEGMENT.pack(s.start, s.position[0], s.position[1], s.velocity[0], s.velocity[1])
    assert len(out) == size
    return bytes(out)


class _Reader:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, st: struct.Struct) -> tuple:
        if self.pos + st.size > len(self.buf):
            raise MalformedBeacon(f"truncated at byte {self.pos}")
        vals = st.unpack_from(self.buf, self.pos)
        self.pos += st.size
        return vals

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise MalformedBeacon(f"truncated at byte {self.pos}")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk


def _decode_descriptors(r: _Reader) -> tuple[ServiceDescriptor, ...]:
    (count,) = r.take(_COUNT)
    out = []
    for _ in range(count):
        kind, unit, price, min_dur, name_len = r.take(_DESC)
        if kind not in _KINDS:
            raise MalformedBeacon(f"bad kind tag {kind}")
        if unit not in _UNITS:
            raise MalformedBeacon(f"bad unit tag {unit}")
        try:
            name = r.raw(name_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedBeacon(f"invalid UTF-8 in service name: {e}") from None
        out.append(ServiceDescriptor(_KINDS[kind], name, price, _UNITS[unit], min_dur))
    return tuple(out)


def decode_beacon(data: bytes, max_bytes: int = MAX_BEACON_BYTES) -> Beacon:
    """Parse a beacon. Any defect in ``data`` raises MalformedBeacon."""
    if len(data) > max_bytes:
        raise MalformedBeacon(f"{len(data)} bytes exceeds the {max_bytes}-byte limit")
    r = _Reader(bytes(data))
    magic, version, sender, tick = r.take(_HEADER)
    if magic != MAGIC:
        raise MalformedBeacon("bad magic")
    if version != VERSION:
        raise MalformedBeacon(f"unsupported version {version}")
    try:
        provided = _decode_descriptors(r)
        required = _decode_descriptors(r)
        (horizon,) = r.take(_HORIZON)
        (nseg,) = r.take(_COUNT)
        segs = []
        for _ in range(nseg):
            t, px, py, vx, vy = r.take(_SEGMENT)
            segs.append(Segment(t, (px, py), (vx, vy)))
        if r.pos != len(r.buf):
            raise MalformedBeacon(f"{len(r.buf) - r.pos} trailing bytes")
        plan = TrajectoryPlan(tuple(segs), horizon)
        return Beacon(sender, provided, required, plan, tick)
    except (InvalidDescriptor, InvalidPlan) as e:
        raise MalformedBeacon(str(e)) from None
