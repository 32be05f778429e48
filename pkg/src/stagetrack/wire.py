"""Binary codec for the main-tag serial link.

Frame layout, all multi-byte fields little-endian::

    SOF 0xA5 | LEN | TYPE | TAG_ID u16 | SEQ u8 | TIMESTAMP_MS u32 | payload | CRC u16

LEN counts TYPE through payload end. CRC is CRC-16/CCITT-FALSE (poly 0x1021,
init 0xFFFF, unreflected, no final xor) over SOF through payload end. The
decoder resynchronizes by skipping a single byte on any validation failure,
which survives corrupted LEN fields.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

from .errors import FieldRange

SOF = 0xA5

TYPE_POSITION = 0x01
TYPE_RANGE = 0x02
TYPE_IMU = 0x03
TYPE_STATUS = 0x04

_HEADER = struct.Struct("<BBBHBI")  # SOF LEN TYPE TAG_ID SEQ TIMESTAMP_MS
_CRC = struct.Struct("<H")

_PAYLOAD = {
    TYPE_POSITION: struct.Struct("<iiiH"),
    TYPE_RANGE: struct.Struct("<HIB"),
    TYPE_IMU: struct.Struct("<9h"),
    TYPE_STATUS: struct.Struct("<BB"),
}
# LEN = TYPE + TAG_ID + SEQ + TIMESTAMP + payload
_LEN = {t: 8 + s.size for t, s in _PAYLOAD.items()}


@dataclass(frozen=True)
class PositionReport:
    tag_id: int
    seq: int
    timestamp_ms: int
    x_mm: int
    y_mm: int
    z_mm: int
    err_mm: int


@dataclass(frozen=True)
class RangeReport:
    tag_id: int
    seq: int
    timestamp_ms: int
    anchor_id: int
    range_mm: int
    quality: int


@dataclass(frozen=True)
class ImuReport:
    tag_id: int
    seq: int
    timestamp_ms: int
    accel_mg: tuple[int, int, int]
    gyro_cdps: tuple[int, int, int]  # 0.01 deg/s units
    mag_dut: tuple[int, int, int]  # 0.1 uT units


@dataclass(frozen=True)
class Status:
    tag_id: int
    seq: int
    timestamp_ms: int
    battery_pct: int
    flags: int


Frame = PositionReport | RangeReport | ImuReport | Status


@dataclass(frozen=True)
class DecodeDiagnostics:
    frames_ok: int = 0
    crc_failures: int = 0
    resyncs: int = 0
    bytes_skipped: int = 0


def crc16_ccitt_false(data: bytes) -> int:
    crc = 0xFFFF
    for b in data:
        crc ^= b << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if crc & 0x8000 else (crc << 1)
            crc &= 0xFFFF
    return crc


def _check(value: int, lo: int, hi: int, name: str) -> int:
    if not isinstance(value, int) or not lo <= value <= hi:
        raise FieldRange(f"{name}={value!r} outside [{lo}, {hi}]")
    return value


def _frame_type(frame: Frame) -> int:
    if isinstance(frame, PositionReport):
        return TYPE_POSITION
    if isinstance(frame, RangeReport):
        return TYPE_RANGE
    if isinstance(frame, ImuReport):
        return TYPE_IMU
    if isinstance(frame, Status):
        return TYPE_STATUS
    raise TypeError(f"not a frame: {frame!r}")


def _pack_payload(frame: Frame) -> bytes:
    if isinstance(frame, PositionReport):
        for f in ("x_mm", "y_mm", "z_mm"):
            _check(getattr(frame, f), -(2**31), 2**31 - 1, f)
        _check(frame.err_mm, 0, 0xFFFF, "err_mm")
        return _PAYLOAD[TYPE_POSITION].pack(frame.x_mm, frame.y_mm, frame.z_mm, frame.err_mm)
    if isinstance(frame, RangeReport):
        _check(frame.anchor_id, 0, 0xFFFF, "anchor_id")
        _check(frame.range_mm, 0, 0xFFFFFFFF, "range_mm")
        _check(frame.quality, 0, 0xFF, "quality")
        return _PAYLOAD[TYPE_RANGE].pack(frame.anchor_id, frame.range_mm, frame.quality)
    if isinstance(frame, ImuReport):
        values = [*frame.accel_mg, *frame.gyro_cdps, *frame.mag_dut]
        for v in values:
            _check(v, -(2**15), 2**15 - 1, "imu component")
        return _PAYLOAD[TYPE_IMU].pack(*values)
    _check(frame.battery_pct, 0, 0xFF, "battery_pct")
    _check(frame.flags, 0, 0xFF, "flags")
    return _PAYLOAD[TYPE_STATUS].pack(frame.battery_pct, frame.flags)


def encode_frame(frame: Frame) -> bytes:
    """Serialize one frame, bit-exact per the link layout."""
    ftype = _frame_type(frame)
    payload = _pack_payload(frame)
    _check(frame.tag_id, 0, 0xFFFF, "tag_id")
    _check(frame.seq, 0, 0xFF, "seq")
    _check(frame.timestamp_ms, 0, 0xFFFFFFFF, "timestamp_ms")
    body = _HEADER.pack(SOF, _LEN[ftype], ftype, frame.tag_id, frame.seq, frame.timestamp_ms)
    body += payload
    return body + _CRC.pack(crc16_ccitt_false(body))


def _parse(buf: bytes, start: int, ftype: int) -> Frame:
    _, _, _, tag_id, seq, ts = _HEADER.unpack_from(buf, start)
    payload = _PAYLOAD[ftype].unpack_from(buf, start + _HEADER.size)
    if ftype == TYPE_POSITION:
        return PositionReport(tag_id, seq, ts, *payload)
    if ftype == TYPE_RANGE:
        return RangeReport(tag_id, seq, ts, *payload)
    if ftype == TYPE_IMU:
        return ImuReport(tag_id, seq, ts, payload[0:3], payload[3:6], payload[6:9])
    return Status(tag_id, seq, ts, *payload)


def decode_stream(
    buffer: bytes,
    diag: DecodeDiagnostics = DecodeDiagnostics(),
) -> tuple[list[Frame], int, DecodeDiagnostics]:
    """Extract all complete valid frames from ``buffer``.

    Returns the frames, the count of bytes safely consumed (a trailing
    partial frame is left unconsumed so callers can buffer more data), and
    updated diagnostics. Corruption never raises; it is absorbed into the
    counters, resynchronizing one byte at a time.
    """
    frames: list[Frame] = []
    frames_ok = diag.frames_ok
    crc_failures = diag.crc_failures
    resyncs = diag.resyncs
    bytes_skipped = diag.bytes_skipped

    i = 0
    n = len(buffer)
    while i < n:
        if buffer[i] != SOF:
            i += 1
            bytes_skipped += 1
            continue
        if i + 3 > n:
            break  # header not complete yet
        length = buffer[i + 1]
        ftype = buffer[i + 2]
        if ftype not in _LEN or length != _LEN[ftype]:
            resyncs += 1
            bytes_skipped += 1
            i += 1
            continue
        total = 2 + length + 2
        if i + total > n:
            break  # partial frame: wait for more bytes
        crc_rx = _CRC.unpack_from(buffer, i + 2 + length)[0]
        if crc16_ccitt_false(buffer[i : i + 2 + length]) != crc_rx:
            crc_failures += 1
            resyncs += 1
            bytes_skipped += 1
            i += 1
            continue
        frames.append(_parse(buffer, i, ftype))
        frames_ok += 1
        i += total

    return frames, i, replace(
        diag,
        frames_ok=frames_ok,
        crc_failures=crc_failures,
        resyncs=resyncs,
        bytes_skipped=bytes_skipped,
    )
