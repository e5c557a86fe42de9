"""Scalable bitstream container.

Layout (little-endian)::

    magic   4 bytes  b"JICD"
    version u16      1
    orig_h  u32
    orig_w  u32
    C       u16      total latent channels
    i       u16      base-layer channels
    model   u64      checkpoint identifier
    then for side, base, enhancement: u32 length + payload

The side stream (hyper-latent) is accounted to the base layer.
"""

import struct
from dataclasses import dataclass

MAGIC = b"JICD"
VERSION = 1
_HEADER = struct.Struct("<4sHIIHHQ")
_LEN = struct.Struct("<I")
HEADER_BYTES = _HEADER.size
SUBSTREAMS = ("side", "base", "enhancement")
# fixed header plus the three length prefixes
OVERHEAD_BYTES = HEADER_BYTES + len(SUBSTREAMS) * _LEN.size


class BitstreamError(ValueError):
    pass


@dataclass(frozen=True)
class ScalableBitstream:
    orig_h: int
    orig_w: int
    channels: int
    base_channels: int
    model_id: int
    side: bytes = b""
    base: bytes = b""
    enhancement: bytes = b""
    version: int = VERSION

    @property
    def padded_size(self):
        return (-(-self.orig_h // 64) * 64, -(-self.orig_w // 64) * 64)

    def serialize(self) -> bytes:
        out = bytearray(_HEADER.pack(MAGIC, self.version, self.orig_h, self.orig_w,
                                     self.channels, self.base_channels, self.model_id))
        for name in SUBSTREAMS:
            payload = getattr(self, name)
            out += _LEN.pack(len(payload))
            out += payload
        return bytes(out)

    def __len__(self):
        return OVERHEAD_BYTES + len(self.side) + len(self.base) + len(self.enhancement)


def parse(data: bytes, lazy_enhancement: bool = False) -> ScalableBitstream:
    """Parse a serialized container.

    With ``lazy_enhancement`` the enhancement payload is neither read nor
    validated; the returned object carries an empty enhancement stream.
    """
    data = memoryview(bytes(data))
    if len(data) < HEADER_BYTES:
        raise BitstreamError(f"truncated header: {len(data)} < {HEADER_BYTES} bytes")
    magic, version, h, w, c, i, model_id = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BitstreamError(f"bad magic {bytes(magic)!r}, not a JICD bitstream")
    if version != VERSION:
        raise BitstreamError(f"unsupported version {version}")
    if not 1 <= i <= c:
        raise BitstreamError(f"invalid channel split i={i}, C={c}")
    pos = HEADER_BYTES
    streams = {}
    for name in SUBSTREAMS:
        if lazy_enhancement and name == "enhancement":
            streams[name] = b""
            break
        if pos + _LEN.size > len(data):
            raise BitstreamError(f"missing {name} substream length")
        (n,) = _LEN.unpack_from(data, pos)
        pos += _LEN.size
        if pos + n > len(data):
            raise BitstreamError(f"{name} substream truncated: expected {n} bytes, have {len(data) - pos}")
        streams[name] = bytes(data[pos:pos + n])
        pos += n
    return ScalableBitstream(h, w, c, i, model_id, version=version, **streams)


def read_base_layer(f) -> ScalableBitstream:
    """Read header, side and base substreams from a binary file object.

    Reading stops at the end of the base payload, so enhancement bytes are
    never touched.
    """
    head = f.read(HEADER_BYTES)
    buf = bytearray(head)
    for _ in range(2):
        raw = f.read(_LEN.size)
        buf += raw
        if len(raw) < _LEN.size:
            break
        (n,) = _LEN.unpack(raw)
        buf += f.read(n)
    return parse(bytes(buf), lazy_enhancement=True)
