"""Minimal RIFF/WAV reader and writer: 16-bit PCM, mono, little-endian.

Unsupported layouts are rejected with the byte offset of the offending
header field. Samples map to [-1, 1] via the int16 range; the writer
clamps out-of-range values (with a warning counting them) and never leaves
a partial file behind (temp file + atomic rename).
"""

from __future__ import annotations

import os
import struct
import warnings

import numpy as np

from .signals import Signal

_PCM_SCALE = 32767.0


class WavFormatError(ValueError):
    """Malformed or unsupported WAV content, with the file offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def read_wav(path) -> Signal:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise WavFormatError("file too short for a RIFF header", 0)
    if data[0:4] != b"RIFF":
        raise WavFormatError("missing RIFF tag", 0)
    if data[8:12] != b"WAVE":
        raise WavFormatError("missing WAVE tag", 8)

    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = pos + 8
        if chunk_id == b"fmt ":
            if size < 16:
                raise WavFormatError("fmt chunk too small", pos + 4)
            fmt = struct.unpack_from("<HHIIHH", data, body)
            fmt_offset = body
        elif chunk_id == b"data":
            payload = data[body:body + size]
            data_offset = body
        pos = body + size + (size & 1)
    if fmt is None:
        raise WavFormatError("no fmt chunk", 12)
    if payload is None:
        raise WavFormatError("no data chunk", 12)

    audio_format, channels, rate, _, _, bits = fmt
    if audio_format != 1:
        raise WavFormatError(f"unsupported audio format {audio_format} "
                             "(PCM only)", fmt_offset)
    if channels != 1:
        raise WavFormatError(f"unsupported channel count {channels} "
                             "(mono only)", fmt_offset + 2)
    if bits != 16:
        raise WavFormatError(f"unsupported bit depth {bits} (16-bit only)",
                             fmt_offset + 14)
    if len(payload) < 2:
        raise WavFormatError("empty data chunk", data_offset)
    ints = np.frombuffer(payload[:len(payload) // 2 * 2], dtype="<i2")
    return Signal(samples=ints.astype(np.float64) / _PCM_SCALE,
                  sample_rate=float(rate))


def write_wav(path, signal: Signal) -> None:
    if signal.sample_rate <= 0:
        raise ValueError("write_wav needs a positive sample rate")
    samples = signal.samples
    n_clipped = int(np.sum((samples < -1.0) | (samples > 1.0)))
    if n_clipped:
        warnings.warn(f"clamped {n_clipped} samples outside [-1, 1]")
    ints = np.round(np.clip(samples, -1.0, 1.0) * _PCM_SCALE).astype("<i2")
    payload = ints.tobytes()
    rate = int(round(signal.sample_rate))
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, rate,
                                    rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(payload))
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, path)
