"""Canonical length-prefixed binary encoding helpers (big-endian)."""

from __future__ import annotations

import struct

from .errors import EncodingError


class Writer:
    def __init__(self):
        self._parts: list[bytes] = []

    def raw(self, b: bytes) -> "Writer":
        self._parts.append(bytes(b))
        return self

    def u8(self, v: int) -> "Writer":
        return self.raw(struct.pack(">B", v))

    def u32(self, v: int) -> "Writer":
        return self.raw(struct.pack(">I", v))

    def u64(self, v: int) -> "Writer":
        return self.raw(struct.pack(">Q", v))

    def f64(self, v: float) -> "Writer":
        return self.raw(struct.pack(">d", v))

    def blob(self, b: bytes) -> "Writer":
        return self.u32(len(b)).raw(b)

    def text(self, s: str) -> "Writer":
        return self.blob(s.encode("utf-8"))

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes):
        self._data = memoryview(bytes(data))
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._data):
            raise EncodingError(f"truncated input at offset {self._pos}")
        out = bytes(self._data[self._pos : self._pos + n])
        self._pos += n
        return out

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def u8(self) -> int:
        return struct.unpack(">B", self._take(1))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack(">d", self._take(8))[0]

    def blob(self) -> bytes:
        return self._take(self.u32())

    def text(self) -> str:
        try:
            return self.blob().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncodingError(str(exc)) from None

    def expect_end(self):
        if self._pos != len(self._data):
            raise EncodingError(f"{len(self._data) - self._pos} trailing bytes")
