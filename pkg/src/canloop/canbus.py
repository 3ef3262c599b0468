"""Virtual CAN segment: extended data frames, float32 signal codec,
periodic scheduling, and identifier-based arbitration on a 1 ms tick.

The bus is idealized: zero transmission latency, no bit stuffing, no
CRC or error frames, unbounded capacity. Every frame queued during a
tick is delivered within that same tick, lower identifiers first,
FIFO among frames sharing an identifier.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, replace

from .errors import EncodeError

MAX_ID = 1 << 29

LEGIT = "legit"
ATTACKER = "attacker"


@dataclass(frozen=True)
class Frame:
    """Extended-format CAN data frame (29-bit identifier)."""

    id: int
    dlc: int
    payload: bytes
    timestamp_queued: int
    origin: str = LEGIT

    def __post_init__(self):
        if not 0 <= self.id < MAX_ID:
            raise ValueError(f"frame id {self.id:#x} outside 29-bit range")
        if not 0 <= self.dlc <= 8:
            raise ValueError(f"dlc {self.dlc} outside [0, 8]")
        if len(self.payload) != self.dlc:
            raise ValueError("payload length must equal dlc")
        if self.origin not in (LEGIT, ATTACKER):
            raise ValueError(f"unknown origin {self.origin!r}")

    def with_payload(self, payload: bytes) -> "Frame":
        return replace(self, payload=payload, dlc=len(payload))


@dataclass(frozen=True)
class MessageSpec:
    """Catalog entry for one periodic signal on the bus."""

    name: str
    id: int
    cycle_ms: int
    signal: str
    width_bits: int = 32


# ES carries the measured engine speed in rpm, TR the requested
# throttle open area in m^2. Both are 32-bit signals sent every 10 ms.
ES = MessageSpec("ES", 0x10, 10, "engine_speed_rpm")
TR = MessageSpec("TR", 0x15, 10, "throttle_request")


# Plausibility bounds for the throttle request, evaluated on the
# stored single-precision value so decode -> re-encode never trips
# the guard on a payload that was accepted once.
_TR_LO = struct.unpack("<f", struct.pack("<f", -0.1))[0]
_TR_HI = struct.unpack("<f", struct.pack("<f", 1.1))[0]


def encode_signal(value: float, spec: MessageSpec) -> bytes:
    """Encode a physical value as a little-endian 32-bit float payload."""
    if not math.isfinite(value):
        raise EncodeError(f"{spec.name} value must be finite, got {value!r}")
    payload = struct.pack("<f", value)
    if spec is ES or spec.signal == ES.signal:
        if value < 0.0:
            raise EncodeError(f"engine speed must be nonnegative, got {value!r}")
    elif not _TR_LO <= struct.unpack("<f", payload)[0] <= _TR_HI:
        raise EncodeError(f"throttle request {value!r} outside plausible range")
    return payload


def decode_signal(payload: bytes, spec: MessageSpec) -> float:
    """Inverse of encode_signal. Exact on every encodable value."""
    if len(payload) < 4:
        raise EncodeError(f"{spec.name} payload too short: {len(payload)} bytes")
    return struct.unpack("<f", payload[:4])[0]


def make_frame(spec: MessageSpec, value: float, tick: int, origin: str = LEGIT) -> Frame:
    return Frame(spec.id, 4, encode_signal(value, spec), tick, origin)


def due(spec: MessageSpec, t_now: int, phase: int = 0) -> bool:
    """Periodic emission decision: true when t_now hits the cycle phase."""
    return t_now % spec.cycle_ms == phase % spec.cycle_ms


class Bus:
    """Single segment with a pending queue and a delivered log."""

    def __init__(self):
        self._pending: list[Frame] = []
        self.delivered: list[tuple[int, Frame]] = []
        self.queued_count = 0

    def queue(self, frame: Frame) -> None:
        self._pending.append(frame)
        self.queued_count += 1

    def flush(self, tick: int) -> list[Frame]:
        """Deliver everything pending, ascending id, FIFO within id.

        list.sort is stable, so sorting on id alone preserves the
        enqueue order among frames that share an identifier.
        """
        self._pending.sort(key=lambda f: f.id)
        out = self._pending
        self._pending = []
        for frame in out:
            self.delivered.append((tick, frame))
        return out

    @property
    def pending_count(self) -> int:
        return len(self._pending)


def export_frame_log(delivered: list[tuple[int, Frame]], path) -> None:
    """Write the delivered log as CSV, one row per frame."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tick_ms", "id_hex", "dlc", "payload_hex", "origin"])
        for tick, frame in delivered:
            writer.writerow(
                [tick, f"{frame.id:#x}", frame.dlc, frame.payload.hex(), frame.origin]
            )
