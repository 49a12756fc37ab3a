"""Little-endian binary encoding helpers for the index and embedding files."""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError


def pack_u32(value: int) -> bytes:
    return struct.pack("<I", value)


def pack_u64(value: int) -> bytes:
    return struct.pack("<Q", value)


def pack_f64(value: float) -> bytes:
    return struct.pack("<d", value)


def pack_str_u32(text: str) -> bytes:
    raw = text.encode("utf-8")
    return pack_u32(len(raw)) + raw


def pack_str_u64(text: str) -> bytes:
    raw = text.encode("utf-8")
    return pack_u64(len(raw)) + raw


def pack_f32_array(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype="<f4").tobytes()


class ByteReader:
    """Sequential reader that reports the byte offset of any truncation."""

    def __init__(self, data: bytes, name: str = "file"):
        self.data = data
        self.name = name
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"{self.name}: truncated {what} at offset {self.pos} "
                f"(need {n} bytes, have {len(self.data) - self.pos})"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def read_u32(self, what: str = "u32") -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def read_u64(self, what: str = "u64") -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def read_f64(self, what: str = "f64") -> float:
        return struct.unpack("<d", self.take(8, what))[0]

    def read_str_u32(self, what: str = "string") -> str:
        n = self.read_u32(f"{what} length")
        return self.take(n, what).decode("utf-8")

    def read_str_u64(self, what: str = "string") -> str:
        n = self.read_u64(f"{what} length")
        return self.take(n, what).decode("utf-8")

    def read_f32_array(self, count: int, what: str = "f32 array") -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").copy()

    def expect_exhausted(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(
                f"{self.name}: {len(self.data) - self.pos} trailing bytes at offset {self.pos}"
            )
