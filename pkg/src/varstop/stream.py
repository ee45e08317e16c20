"""Binary iterate-stream format for attaching external trainers.

Layout: 4-byte ASCII magic "ESWM", 1 version byte (0x01), frame length as a
4-byte little-endian unsigned integer, 3 reserved zero bytes; then back-to-back
frames of frame-length 32-bit little-endian IEEE-754 floats until EOF.  Twelve
header bytes total, trivially producible from any language.
"""

from __future__ import annotations

import struct
from typing import Iterable, Iterator

import numpy as np

MAGIC = b"ESWM"
VERSION = 1
HEADER = struct.Struct("<4sBI3s")
assert HEADER.size == 12


class StreamFormatError(ValueError):
    """Malformed header, truncated frame, or inconsistent frame size."""


def write_header(fh, frame_len: int) -> None:
    if frame_len < 1:
        raise ValueError("frame length must be positive")
    fh.write(HEADER.pack(MAGIC, VERSION, frame_len, b"\x00\x00\x00"))


def write_frame(fh, values) -> None:
    fh.write(np.asarray(values, dtype="<f4").ravel().tobytes())


def write_stream(path, frames: Iterable) -> int:
    """Serialize frames (any flat float sequences of one common length);
    returns the frame count."""
    count = 0
    frame_len = None
    with open(path, "wb") as fh:
        for frame in frames:
            arr = np.asarray(getattr(frame, "data", frame), dtype="<f4").ravel()
            if frame_len is None:
                frame_len = arr.size
                write_header(fh, frame_len)
            elif arr.size != frame_len:
                raise StreamFormatError(
                    f"frame {count} has {arr.size} samples, expected {frame_len}"
                )
            fh.write(arr.tobytes())
            count += 1
        if frame_len is None:
            raise ValueError("refusing to write a stream with no frames")
    return count


def read_header(fh) -> int:
    blob = fh.read(HEADER.size)
    if len(blob) < HEADER.size:
        raise StreamFormatError("truncated header")
    magic, version, frame_len, reserved = HEADER.unpack(blob)
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise StreamFormatError(f"unsupported version {version}")
    if reserved != b"\x00\x00\x00":
        raise StreamFormatError("reserved header bytes must be zero")
    if frame_len < 1:
        raise StreamFormatError("frame length must be positive")
    return frame_len


def read_frames(path) -> Iterator[np.ndarray]:
    """Yield frames as float64 arrays (exact copies of the float32 wire values)."""
    with open(path, "rb") as fh:
        frame_len = read_header(fh)
        nbytes = 4 * frame_len
        while True:
            blob = fh.read(nbytes)
            if not blob:
                return
            if len(blob) < nbytes:
                raise StreamFormatError(
                    f"truncated frame: got {len(blob)} of {nbytes} bytes"
                )
            yield np.frombuffer(blob, dtype="<f4").astype(float)


def peek_frame_len(path) -> int:
    with open(path, "rb") as fh:
        return read_header(fh)
