"""Byte-oriented range coder with carry propagation (LZMA-style).

Symbols are coded against integer cumulative frequency tables whose total is
``2**PRECISION``. A table ``cdf`` of length ``n + 1`` describes ``n`` symbols;
symbol ``s`` occupies ``[cdf[s], cdf[s + 1])``.
"""

from bisect import bisect_right

PRECISION = 16
TOTAL = 1 << PRECISION
_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


class RangeCoderError(ValueError):
    pass


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()
        self._finished = False

    def _shift_low(self):
        if self.low < 0xFF000000 or self.low > _MASK32:
            carry = self.low >> 32
            temp = self._cache
            while True:
                self._out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self._cache_size -= 1
                if self._cache_size == 0:
                    break
            self._cache = (self.low >> 24) & 0xFF
        self._cache_size += 1
        self.low = (self.low << 8) & _MASK32

    def encode(self, start: int, size: int, bits: int = PRECISION):
        if size <= 0:
            raise RangeCoderError("cannot encode a zero-frequency symbol")
        r = self.range >> bits
        self.low += start * r
        self.range = r * size
        while self.range < _TOP:
            self.range <<= 8
            self._shift_low()

    def encode_symbol(self, symbol: int, cdf):
        if not 0 <= symbol < len(cdf) - 1:
            raise RangeCoderError(f"symbol {symbol} outside table support [0, {len(cdf) - 1})")
        start = cdf[symbol]
        self.encode(start, cdf[symbol + 1] - start)

    def encode_bits(self, value: int, nbits: int):
        """Equiprobable bits, most significant first."""
        for k in range(nbits - 1, -1, -1):
            self.encode((value >> k) & 1, 1, 1)

    def finish(self) -> bytes:
        if not self._finished:
            for _ in range(5):
                self._shift_low()
            self._finished = True
        # the first emitted byte is always the initial zero cache
        return bytes(self._out[1:])


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = bytes(data)
        self.pos = 0
        self.range = _MASK32
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._next_byte()

    def _next_byte(self) -> int:
        # the encoder flushes 4 bytes past the last needed one, so any read past
        # the end means the stream was truncated
        if self.pos >= len(self.data):
            raise RangeCoderError(
                f"truncated range-coded stream: needed byte {self.pos}, have {len(self.data)}")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def _normalize(self):
        while self.range < _TOP:
            self.code = ((self.code << 8) | self._next_byte()) & _MASK32
            self.range <<= 8

    def decode_freq(self, bits: int = PRECISION) -> int:
        self._r = self.range >> bits
        value = self.code // self._r
        limit = (1 << bits) - 1
        return value if value < limit else limit

    def consume(self, start: int, size: int):
        self.code -= start * self._r
        if self.code < 0:
            raise RangeCoderError(f"corrupted range-coder state near byte {self.pos}")
        self.range = self._r * size
        self._normalize()

    def decode_symbol(self, cdf) -> int:
        f = self.decode_freq()
        s = bisect_right(cdf, f) - 1
        if s >= len(cdf) - 1:
            raise RangeCoderError(f"corrupted range-coder state near byte {self.pos}")
        self.consume(cdf[s], cdf[s + 1] - cdf[s])
        return s

    def decode_bits(self, nbits: int) -> int:
        value = 0
        for _ in range(nbits):
            bit = self.decode_freq(1)
            self.consume(bit, 1)
            value = (value << 1) | bit
        return value


def encode_symbols(symbols, cdfs) -> bytes:
    enc = RangeEncoder()
    for s, cdf in zip(symbols, cdfs):
        enc.encode_symbol(int(s), cdf)
    return enc.finish()


def decode_symbols(data: bytes, cdfs) -> list:
    dec = RangeDecoder(data)
    return [dec.decode_symbol(cdf) for cdf in cdfs]
