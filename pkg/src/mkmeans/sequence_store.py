"""Binary key/value container for image payloads, plus raster decoding.

Container layout (little-endian, no padding, no checksum)::

    magic        6 bytes   b"MKSQ1\\0"
    entry count  u64
    per entry:   u32 key length, key bytes (UTF-8), u32 value length, value bytes
"""
from __future__ import annotations

import io
import mmap
import os
import struct
from dataclasses import dataclass
from typing import Iterator

import numpy as np

MAGIC = b"MKSQ1\0"
HEADER = struct.Struct("<6sQ")
U32 = struct.Struct("<I")
HEADER_SIZE = HEADER.size
MAX_FIELD = 0xFFFFFFFF


class ContainerError(ValueError):
    """Malformed container. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class BadMagicError(ContainerError):
    pass


class TruncatedEntryError(ContainerError):
    pass


class LengthOverflowError(ContainerError):
    pass


class DuplicateKeyError(ValueError):
    def __init__(self, key: str):
        super().__init__(f"duplicate key in container: {key!r}")
        self.key = key


class DecodeError(ValueError):
    def __init__(self, fmt: str, reason: str):
        super().__init__(f"cannot decode {fmt} image: {reason}")
        self.format = fmt


@dataclass(frozen=True)
class SequenceEntry:
    key: str
    value: bytes

    def __post_init__(self):
        if not self.key:
            raise ValueError("entry key must be non-empty")


@dataclass(frozen=True)
class Raster:
    """Decoded image: ``pixels`` is a (height, width, 3) uint8 array, row-major."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"raster must be at least 1x1, got {self.width}x{self.height}")
        if self.pixels.shape != (self.height, self.width, 3) or self.pixels.dtype != np.uint8:
            raise ValueError(
                f"pixels must be uint8 of shape {(self.height, self.width, 3)}, "
                f"got {self.pixels.dtype} {self.pixels.shape}"
            )

    @classmethod
    def from_array(cls, pixels) -> "Raster":
        arr = np.asarray(pixels, dtype=np.uint8)
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr)

    def triples(self) -> list[tuple[int, int, int]]:
        return [tuple(int(c) for c in px) for px in self.pixels.reshape(-1, 3)]


def packed_size(entries) -> int:
    return HEADER_SIZE + sum(8 + len(e.key.encode("utf-8")) + len(e.value) for e in entries)


def write_container(stream, entries) -> int:
    """Stream ``entries`` into a binary file object; returns bytes written."""
    entries = list(entries)
    seen = set()
    for e in entries:
        if e.key in seen:
            raise DuplicateKeyError(e.key)
        seen.add(e.key)
    written = stream.write(HEADER.pack(MAGIC, len(entries)))
    for e in entries:
        key = e.key.encode("utf-8")
        if len(key) > MAX_FIELD or len(e.value) > MAX_FIELD:
            raise ValueError(f"entry {e.key!r} exceeds the 4 GiB field limit")
        written += stream.write(U32.pack(len(key)))
        written += stream.write(key)
        written += stream.write(U32.pack(len(e.value)))
        written += stream.write(e.value)
    return written


def pack(entries) -> bytes:
    buf = io.BytesIO()
    write_container(buf, entries)
    return buf.getvalue()


def iter_entries(data) -> Iterator[tuple[str, memoryview]]:
    """Yield ``(key, value_view)`` pairs without copying payloads.

    ``data`` is any buffer (bytes, mmap, memoryview).  Raises the
    :class:`ContainerError` subclasses on malformed input.
    """
    view = memoryview(data).cast("B")
    size = len(view)
    if size < len(MAGIC) or bytes(view[: len(MAGIC)]) != MAGIC:
        raise BadMagicError("bad magic, expected b'MKSQ1\\x00'", 0)
    if size < HEADER_SIZE:
        raise TruncatedEntryError("truncated header", len(MAGIC))
    _, count = HEADER.unpack_from(view, 0)
    if count > (size - HEADER_SIZE) // 8:
        raise LengthOverflowError(
            f"entry count {count} cannot fit in {size - HEADER_SIZE} remaining bytes", len(MAGIC)
        )
    pos = HEADER_SIZE
    seen = set()
    for _ in range(count):
        start = pos
        if pos + 4 > size:
            raise TruncatedEntryError("truncated entry: missing key length", start)
        (klen,) = U32.unpack_from(view, pos)
        pos += 4
        if pos + klen > size:
            raise TruncatedEntryError(f"truncated entry: key needs {klen} bytes", start)
        try:
            key = bytes(view[pos : pos + klen]).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ContainerError(f"entry key is not valid UTF-8: {exc.reason}", pos) from None
        if not key:
            raise ContainerError("empty entry key", start)
        if key in seen:
            raise ContainerError(f"duplicate key {key!r}", start)
        seen.add(key)
        pos += klen
        if pos + 4 > size:
            raise TruncatedEntryError("truncated entry: missing value length", start)
        (vlen,) = U32.unpack_from(view, pos)
        pos += 4
        if pos + vlen > size:
            raise TruncatedEntryError(
                f"truncated entry {key!r}: value needs {vlen} bytes, {size - pos} available", start
            )
        yield key, view[pos : pos + vlen]
        pos += vlen
    if pos != size:
        raise LengthOverflowError(f"{size - pos} trailing bytes after last entry", pos)


def unpack(data) -> list[SequenceEntry]:
    return [SequenceEntry(key, bytes(value)) for key, value in iter_entries(data)]


def open_container(path) -> mmap.mmap | bytes:
    """Map a container file read-only; empty files come back as ``b""``."""
    with open(path, "rb") as fh:
        if os.fstat(fh.fileno()).st_size == 0:
            return b""
        return mmap.mmap(fh.fileno(), 0, access=mmap.ACCESS_READ)


def sniff_format(payload) -> str | None:
    head = bytes(memoryview(payload)[:8])
    if head.startswith(b"\x89PNG\r\n\x1a\n"):
        return "png"
    if head[:2] in (b"P6", b"P3"):
        return "ppm"
    return None


def _ppm_tokens(view, pos, count):
    """Read ``count`` whitespace-separated header integers, skipping comments."""
    out = []
    n = len(view)
    while len(out) < count:
        while pos < n and (view[pos] in b" \t\r\n" or view[pos] == ord("#")):
            if view[pos] == ord("#"):
                while pos < n and view[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and chr(view[pos]).isdigit():
            pos += 1
        if start == pos:
            raise DecodeError("ppm", f"malformed header near byte {pos}")
        out.append(int(bytes(view[start:pos])))
    return out, pos


def decode_ppm(payload) -> Raster:
    view = memoryview(payload).cast("B")
    magic = bytes(view[:2])
    if magic not in (b"P6", b"P3"):
        raise DecodeError("ppm", f"bad magic {magic!r}")
    (width, height, maxval), pos = _ppm_tokens(view, 2, 3)
    if width < 1 or height < 1:
        raise DecodeError("ppm", f"invalid size {width}x{height}")
    if not 1 <= maxval <= 255:
        raise DecodeError("ppm", f"unsupported maxval {maxval} (8-bit only)")
    n = width * height * 3
    if magic == b"P6":
        if pos >= len(view) or view[pos] not in b" \t\r\n":
            raise DecodeError("ppm", "missing whitespace after header")
        pos += 1
        if len(view) - pos < n:
            raise DecodeError("ppm", f"pixel data truncated: need {n} bytes, have {len(view) - pos}")
        pixels = np.frombuffer(view, dtype=np.uint8, count=n, offset=pos)
    else:
        values = bytes(view[pos:]).split()
        if len(values) < n:
            raise DecodeError("ppm", f"pixel data truncated: need {n} samples, have {len(values)}")
        pixels = np.array(values[:n], dtype=np.int64)
        if pixels.max(initial=0) > maxval:
            raise DecodeError("ppm", "sample exceeds maxval")
        pixels = pixels.astype(np.uint8)
    if maxval != 255:
        pixels = np.rint(pixels.astype(np.float64) * (255.0 / maxval)).astype(np.uint8)
    return Raster(width, height, pixels.reshape(height, width, 3))


def decode_png(payload) -> Raster:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(io.BytesIO(bytes(payload))) as im:
            im.load()
            if im.mode != "RGB":
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError("png", str(exc)) from None
    return Raster.from_array(arr)


def decode_image(payload, format_hint: str | None = None) -> Raster:
    """Decode a PNG or PPM payload into an RGB raster; alpha is dropped."""
    fmt = (format_hint or "").lower().lstrip(".") or sniff_format(payload)
    if fmt in ("ppm", "pnm"):
        return decode_ppm(payload)
    if fmt == "png":
        return decode_png(payload)
    raise DecodeError(fmt or "unknown", "unsupported image encoding (PNG and PPM only)")


def encode_ppm(raster: Raster) -> bytes:
    header = f"P6\n{raster.width} {raster.height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(raster.pixels).tobytes()


def encode_png(raster: Raster) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(raster.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
