"""CAN 2.0A joint bus: frame packing, bit timing, cycle feasibility.

Joint commands and feedback ride classic 11-bit-identifier data frames
at 1 Mbps.  The command payload packs position, velocity, kp, kd, and
torque into 64 bits big-endian; feedback packs node id, position,
velocity, and torque into 48 bits.  Bit-length arithmetic includes the
3-bit interframe space, so a dlc=8 frame costs 111 bits unstuffed and
at most 135 on the wire.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

CRC15_POLY = 0x4599
COMMAND_DLC = 8
FEEDBACK_DLC = 6
FEEDBACK_BASE_ID = 0x100

# Fixed unstuffed tail: CRC delimiter, ACK slot, ACK delimiter, 7-bit
# end of frame, 3-bit interframe space.
_TAIL_BITS = 13

_BYTE_BITS = [tuple((b >> k) & 1 for k in range(7, -1, -1)) for b in range(256)]


class DecodeError(ValueError):
    """A received frame could not be interpreted."""


@dataclass(frozen=True)
class CanFrame:
    """One classic data frame: 11-bit identifier plus 0-8 data bytes."""

    can_id: int
    data: bytes

    def __post_init__(self) -> None:
        if not 0 <= self.can_id <= 0x7FF:
            raise ValueError(f"can_id {self.can_id:#x} outside 11-bit range")
        if len(self.data) > 8:
            raise ValueError(f"payload of {len(self.data)} bytes exceeds 8")

    @property
    def dlc(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class WireField:
    name: str
    bits: int
    lo: float
    hi: float

    @property
    def span_codes(self) -> int:
        return (1 << self.bits) - 1

    def encode(self, x: float) -> tuple[int, bool]:
        """Map a float to its wire code; flags when clamping occurred."""
        clamped = x < self.lo or x > self.hi
        x = min(self.hi, max(self.lo, x))
        code = round((x - self.lo) * self.span_codes / (self.hi - self.lo))
        return code, clamped

    def decode(self, code: int) -> float:
        if not 0 <= code <= self.span_codes:
            raise DecodeError(f"{self.name} code {code} outside {self.bits} bits")
        return self.lo + code * (self.hi - self.lo) / self.span_codes


@dataclass(frozen=True)
class JointWire:
    """Field ranges for the joint command/feedback payloads."""

    position_min: float = -4.0 * math.pi
    position_max: float = 4.0 * math.pi
    velocity_min: float = -30.0
    velocity_max: float = 30.0
    kp_max: float = 500.0
    kd_max: float = 5.0
    tau_max: float = 12.0

    @property
    def position(self) -> WireField:
        return WireField("position", 16, self.position_min, self.position_max)

    @property
    def velocity(self) -> WireField:
        return WireField("velocity", 12, self.velocity_min, self.velocity_max)

    @property
    def kp(self) -> WireField:
        return WireField("kp", 12, 0.0, self.kp_max)

    @property
    def kd(self) -> WireField:
        return WireField("kd", 12, 0.0, self.kd_max)

    @property
    def torque(self) -> WireField:
        return WireField("torque", 12, -self.tau_max, self.tau_max)


def encode_command(
    wire: JointWire,
    node_id: int,
    position: float,
    velocity: float,
    kp: float,
    kd: float,
    torque: float,
) -> tuple[CanFrame, list[str]]:
    """Pack a full-state joint command into an 8-byte frame.

    Out-of-range values are clamped to the wire range and reported in
    the returned flag list rather than raising: a saturated command is
    still a valid command.
    """
    codes = []
    flags = []
    for f, x in (
        (wire.position, position),
        (wire.velocity, velocity),
        (wire.kp, kp),
        (wire.kd, kd),
        (wire.torque, torque),
    ):
        code, clamped = f.encode(x)
        codes.append(code)
        if clamped:
            flags.append(f.name)
    p, v, a, b, t = codes
    data = bytes(
        [
            (p >> 8) & 0xFF,
            p & 0xFF,
            (v >> 4) & 0xFF,
            ((v & 0xF) << 4) | ((a >> 8) & 0xF),
            a & 0xFF,
            (b >> 4) & 0xFF,
            ((b & 0xF) << 4) | ((t >> 8) & 0xF),
            t & 0xFF,
        ]
    )
    return CanFrame(can_id=node_id, data=data), flags


def decode_command(frame: CanFrame, wire: JointWire):
    """Unpack an 8-byte command frame; returns a position-mode command."""
    from .actuator import ControlCommand

    if frame.dlc != COMMAND_DLC:
        raise DecodeError(
            f"command frame id={frame.can_id:#x} has dlc {frame.dlc}, "
            f"expected {COMMAND_DLC}")
    d = frame.data
    p = (d[0] << 8) | d[1]
    v = (d[2] << 4) | (d[3] >> 4)
    a = ((d[3] & 0xF) << 8) | d[4]
    b = (d[5] << 4) | (d[6] >> 4)
    t = ((d[6] & 0xF) << 8) | d[7]
    return ControlCommand(
        mode="position",
        setpoint=wire.position.decode(p),
        velocity_setpoint=wire.velocity.decode(v),
        kp=wire.kp.decode(a),
        kd=wire.kd.decode(b),
        tau_ff=wire.torque.decode(t),
    )


def encode_feedback(
    wire: JointWire,
    node_id: int,
    position: float,
    velocity: float,
    torque: float,
) -> tuple[CanFrame, list[str]]:
    """Pack joint feedback into a 6-byte frame on id 0x100 + node."""
    if not 0 <= node_id <= 0xFF:
        raise ValueError(f"node_id {node_id} outside one byte")
    codes = []
    flags = []
    for f, x in (
        (wire.position, position),
        (wire.velocity, velocity),
        (wire.torque, torque),
    ):
        code, clamped = f.encode(x)
        codes.append(code)
        if clamped:
            flags.append(f.name)
    p, v, t = codes
    data = bytes(
        [
            node_id,
            (p >> 8) & 0xFF,
            p & 0xFF,
            (v >> 4) & 0xFF,
            ((v & 0xF) << 4) | ((t >> 8) & 0xF),
            t & 0xFF,
        ]
    )
    return CanFrame(can_id=FEEDBACK_BASE_ID + node_id, data=data), flags


def decode_feedback(frame: CanFrame, wire: JointWire) -> tuple[int, float, float, float]:
    """Unpack a feedback frame to (node_id, position, velocity, torque)."""
    if frame.dlc != FEEDBACK_DLC:
        raise DecodeError(
            f"feedback frame id={frame.can_id:#x} has dlc {frame.dlc}, "
            f"expected {FEEDBACK_DLC}")
    node = frame.data[0]
    if frame.can_id != FEEDBACK_BASE_ID + node:
        raise DecodeError(
            f"feedback frame id={frame.can_id:#x} does not match "
            f"embedded node id {node}")
    d = frame.data
    p = (d[1] << 8) | d[2]
    v = (d[3] << 4) | (d[4] >> 4)
    t = ((d[4] & 0xF) << 8) | d[5]
    return (
        node,
        wire.position.decode(p),
        wire.velocity.decode(v),
        wire.torque.decode(t),
    )


# Bit-level timing ------------------------------------------------------

def frame_bit_length(dlc: int, worst_case: bool = False) -> int:
    """Wire bits for a classic data frame with `dlc` payload bytes.

    The base count sums every field of the 11-bit-identifier frame
    including the 3-bit interframe space: 47 + 8*dlc.  The stuffable
    region (start-of-frame through the CRC sequence) spans 34 + 8*dlc
    bits, so the stuffing worst case adds floor((34 + 8*dlc - 1)/4).
    """
    if not 0 <= dlc <= 8:
        raise ValueError(f"dlc {dlc} outside 0..8")
    base = 47 + 8 * dlc
    if not worst_case:
        return base
    return base + (34 + 8 * dlc - 1) // 4


def crc15(bits: list[int]) -> int:
    """CRC-15 of a bit sequence with the CAN polynomial 0x4599."""
    crc = 0
    for b in bits:
        high = (crc >> 14) & 1
        crc = (crc << 1) & 0x7FFF
        if b ^ high:
            crc ^= CRC15_POLY
    return crc


def stuffable_bits(frame: CanFrame) -> list[int]:
    """The frame's SOF-through-CRC bits, before stuffing."""
    bits = [0]  # start of frame
    for k in range(10, -1, -1):
        bits.append((frame.can_id >> k) & 1)
    bits.append(0)  # RTR: data frame
    bits.append(0)  # IDE: standard identifier
    bits.append(0)  # r0
    for k in range(3, -1, -1):
        bits.append((frame.dlc >> k) & 1)
    for byte in frame.data:
        bits.extend(_BYTE_BITS[byte])
    crc = crc15(bits)
    for k in range(14, -1, -1):
        bits.append((crc >> k) & 1)
    return bits


def stuff_bits(bits: list[int]) -> list[int]:
    """Insert a complement bit after every run of five identical bits.

    The inserted bit starts a new run, exactly as a CAN transceiver
    counts it.
    """
    out = []
    prev = -1
    run = 0
    for b in bits:
        out.append(b)
        if b == prev:
            run += 1
        else:
            prev = b
            run = 1
        if run == 5:
            s = 1 - b
            out.append(s)
            prev = s
            run = 1
    return out


def stuffed_frame_length(frame: CanFrame) -> int:
    """Actual wire bits for a frame, stuffing included."""
    return len(stuff_bits(stuffable_bits(frame))) + _TAIL_BITS


def worst_case_region_bits(dlc: int) -> list[int]:
    """A stuffable-region bit pattern that meets the stuffing bound.

    Five identical bits followed by alternating four-bit groups force a
    stuff bit as early and as often as the rule allows.  Feeding this
    pattern to stuff_bits yields exactly floor((34 + 8*dlc - 1)/4)
    inserted bits.  No compliant frame reaches the bound (the CRC and
    fixed-format bits get in the way), which is why it is exercised at
    the bit-pattern level.
    """
    n = 34 + 8 * dlc
    bits = [0] * min(5, n)
    val = 1
    while len(bits) < n:
        bits.extend([val] * min(4, n - len(bits)))
        val = 1 - val
    return bits


# Cycle planning --------------------------------------------------------

@dataclass(frozen=True)
class BusConfig:
    """One CAN segment serving a set of joint devices."""

    n_devices: int = 6
    bitrate: float = 1_000_000.0   # bits/s
    cycle_rate: float = 250.0      # Hz, control cycles per second
    frames_per_device: int = 2     # one command + one feedback per cycle
    payload_dlc: int = 8           # sizing basis: worst-case frames

    def __post_init__(self) -> None:
        if self.n_devices < 1:
            raise ValueError("n_devices must be >= 1")
        if self.bitrate <= 0 or self.cycle_rate <= 0:
            raise ValueError("bitrate and cycle_rate must be positive")
        if self.frames_per_device < 1:
            raise ValueError("frames_per_device must be >= 1")


@dataclass(frozen=True)
class FeasibilityReport:
    bus: BusConfig
    frame_bits: int                # worst-case bits per frame
    bits_per_cycle: int
    utilization: float
    feasible: bool
    slack_seconds: float           # idle bus time per cycle; negative if over

    def describe(self) -> str:
        state = "feasible" if self.feasible else "INFEASIBLE"
        return (
            f"{self.bus.n_devices} devices x {self.bus.frames_per_device} "
            f"frames x {self.frame_bits} bits at {self.bus.cycle_rate:g} Hz "
            f"on a {self.bus.bitrate:g} bit/s bus: utilization "
            f"{self.utilization:.6g} ({state}, slack {self.slack_seconds:.3e} s "
            f"per cycle)"
        )


def cycle_feasibility(bus: BusConfig) -> FeasibilityReport:
    """Worst-case schedulability of one control cycle on one bus.

    Every frame is costed at its stuffing worst case, so a feasible
    report is a guarantee, not an average.
    """
    frame_bits = frame_bit_length(bus.payload_dlc, worst_case=True)
    bits_per_cycle = bus.n_devices * bus.frames_per_device * frame_bits
    utilization = bits_per_cycle * bus.cycle_rate / bus.bitrate
    cycle_time = 1.0 / bus.cycle_rate
    slack = cycle_time - bits_per_cycle / bus.bitrate
    return FeasibilityReport(
        bus=bus,
        frame_bits=frame_bits,
        bits_per_cycle=bits_per_cycle,
        utilization=utilization,
        feasible=utilization < 1.0,
        slack_seconds=slack,
    )


@dataclass(frozen=True)
class ScheduledFrame:
    frame: CanFrame
    wire_bits: int
    start_time: float
    end_time: float


def schedule_cycle(
    frames: list[CanFrame], bus: BusConfig, start: float = 0.0
) -> list[ScheduledFrame]:
    """Serialize one cycle's frames in arbitration order.

    Lower identifier wins arbitration; ties keep queue order.  Frames
    are costed at their actual stuffed length.  Deterministic.
    """
    order = sorted(range(len(frames)), key=lambda i: (frames[i].can_id, i))
    out = []
    t = start
    for i in order:
        bits = stuffed_frame_length(frames[i])
        t_end = t + bits / bus.bitrate
        out.append(ScheduledFrame(frames[i], bits, t, t_end))
        t = t_end
    return out
