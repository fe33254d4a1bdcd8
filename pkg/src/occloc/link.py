"""S2-PSK optical link: packet framing, two-LED waveform, channel and sampler.

A beacon broadcasts its id packet on a pair of LEDs. LED 1 always carries a
square clock (high for the first half of every cycle, low for the second);
LED 2 carries the same clock during a ``0`` bit and its complement during a
``1`` bit. A camera sampling both LEDs in one frame recovers the bit as
``s1 XOR s2`` regardless of where in the cycle the sample lands.

Data bits are Manchester coded (``b -> (b, 1-b)``) before modulation, so a
camera at ``f`` fps delivers ``f/2`` payload bits per second.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
from scipy.special import erfc

HEADER_BITS = 4
ID_BITS = 12
FIELD_BITS = 8
PACKET_BITS = HEADER_BITS + ID_BITS + 2 * FIELD_BITS

SL_HEADER = (1, 0, 1, 0)
FV_HEADER = (0, 1, 0, 1)


class PacketError(ValueError):
    """Bit string is not a valid beacon packet."""


class ManchesterError(ValueError):
    """Chip pair is not a valid Manchester symbol."""


class TraceFormatError(ValueError):
    """Malformed frame-trace record."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _to_bits(value: int, width: int) -> list:
    return [(value >> (width - 1 - i)) & 1 for i in range(width)]


def _from_bits(bits) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def _quantize(value: float, unit: float, name: str) -> int:
    q = int(round(value / unit))
    if not 0 <= q < (1 << FIELD_BITS):
        raise PacketError(f"{name}={value} does not fit an {FIELD_BITS}-bit field")
    return q


@dataclass(frozen=True)
class BeaconId:
    """Decoded id packet.

    Payload fields are stored as integers exactly as transmitted. For
    streetlights ``field_a`` is the lamp height in decimeters and ``field_b``
    the spacing to the next streetlight in meters; for vehicles ``field_a`` is
    the taillight area in cm^2 and ``field_b`` a flag byte.
    """

    kind: str
    id: int
    field_a: int
    field_b: int = 0

    def __post_init__(self):
        if self.kind not in ("SL", "FV"):
            raise PacketError(f"unknown beacon kind {self.kind!r}")
        if not 0 <= self.id < (1 << ID_BITS):
            raise PacketError(f"id {self.id} does not fit {ID_BITS} bits")
        for v in (self.field_a, self.field_b):
            if not 0 <= v < (1 << FIELD_BITS):
                raise PacketError(f"field value {v} does not fit {FIELD_BITS} bits")

    @classmethod
    def streetlight(cls, id: int, lamp_height: float, spacing: float) -> "BeaconId":
        return cls("SL", id, _quantize(lamp_height, 0.1, "lamp_height"),
                   _quantize(spacing, 1.0, "spacing"))

    @classmethod
    def vehicle(cls, id: int, panel_area: float, flags: int = 0) -> "BeaconId":
        return cls("FV", id, _quantize(panel_area, 1e-4, "panel_area"), flags)

    @property
    def header(self) -> tuple:
        return SL_HEADER if self.kind == "SL" else FV_HEADER

    @property
    def lamp_height(self) -> float:
        return self.field_a * 0.1

    @property
    def spacing(self) -> float:
        return float(self.field_b)

    @property
    def panel_area(self) -> float:
        return self.field_a * 1e-4

    def to_bits(self) -> list:
        return (list(self.header) + _to_bits(self.id, ID_BITS)
                + _to_bits(self.field_a, FIELD_BITS) + _to_bits(self.field_b, FIELD_BITS))

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "BeaconId":
        bits = [int(b) for b in bits]
        if len(bits) != PACKET_BITS:
            raise PacketError(f"expected {PACKET_BITS} bits, got {len(bits)}")
        header = tuple(bits[:HEADER_BITS])
        if header == SL_HEADER:
            kind = "SL"
        elif header == FV_HEADER:
            kind = "FV"
        else:
            raise PacketError(f"unknown header {header}")
        i = HEADER_BITS
        ident = _from_bits(bits[i:i + ID_BITS])
        i += ID_BITS
        a = _from_bits(bits[i:i + FIELD_BITS])
        b = _from_bits(bits[i + FIELD_BITS:])
        return cls(kind, ident, a, b)


def manchester_encode(bits: Iterable[int]) -> list:
    out = []
    for b in bits:
        b = int(b)
        out += [b, 1 - b]
    return out


def manchester_decode(chips: Sequence[int]) -> list:
    if len(chips) % 2:
        raise ManchesterError("odd number of chips")
    out = []
    for k in range(0, len(chips), 2):
        a, b = int(chips[k]), int(chips[k + 1])
        if a == b:
            raise ManchesterError(f"invalid symbol ({a}, {b}) at chip {k}")
        out.append(a)
    return out


@dataclass(frozen=True)
class S2pskWaveform:
    bit_sequence: tuple
    clock_rate: float = 120.0  # Hz, 1/T
    cycles_per_bit: int = 4  # N

    def __post_init__(self):
        object.__setattr__(self, "bit_sequence", tuple(int(b) for b in self.bit_sequence))
        if not self.bit_sequence:
            raise ValueError("bit_sequence must be nonempty")
        if any(b not in (0, 1) for b in self.bit_sequence):
            raise ValueError("bits must be 0 or 1")
        if self.clock_rate < 100.0:
            raise ValueError("clock_rate below 100 Hz would flicker")
        if self.cycles_per_bit < 1:
            raise ValueError("cycles_per_bit must be >= 1")

    @property
    def cycle_period(self) -> float:
        return 1.0 / self.clock_rate

    @property
    def bit_interval(self) -> float:
        return self.cycles_per_bit * self.cycle_period

    @property
    def duration(self) -> float:
        return len(self.bit_sequence) * self.bit_interval

    def states(self, t) -> tuple:
        """LED states at time(s) ``t``; the sequence repeats after ``duration``."""
        t = np.asarray(t, dtype=float)
        phase = np.mod(t / self.cycle_period, 1.0)
        s1 = (phase < 0.5).astype(np.int8)
        k = np.floor(np.mod(t, self.duration) / self.bit_interval).astype(int)
        k = np.clip(k, 0, len(self.bit_sequence) - 1)
        bits = np.asarray(self.bit_sequence, dtype=np.int8)[k]
        return s1, s1 ^ bits


def encode_s2psk(bits: Sequence[int], cycles_per_bit: int = 4) -> np.ndarray:
    """Half-cycle state schedule, shape ``(2, 2 * N * len(bits))``.

    Row 0 is LED 1, row 1 is LED 2; each column is one half clock cycle.
    """
    bits = np.asarray(list(bits), dtype=np.int8)
    if bits.size == 0:
        raise ValueError("bits must be nonempty")
    carrier = np.tile(np.array([1, 0], dtype=np.int8), cycles_per_bit * bits.size)
    led2 = carrier ^ np.repeat(bits, 2 * cycles_per_bit)
    return np.vstack([carrier, led2])


@dataclass(frozen=True)
class S2pskFrameSample:
    s1: int
    s2: int
    sample_time: float = 0.0

    def __post_init__(self):
        if self.s1 not in (0, 1) or self.s2 not in (0, 1):
            raise ValueError("LED states must be 0 or 1")


def decode_frame(sample: S2pskFrameSample) -> int:
    return sample.s1 ^ sample.s2


def sample_offset(waveform: S2pskWaveform) -> float:
    """Sampling instant inside a bit interval: the middle of a half cycle."""
    return (waveform.cycles_per_bit // 2) * waveform.cycle_period + waveform.cycle_period / 4


def flip_states(s1, s2, p_e: float, rng: np.random.Generator, alpha: float = 1.0):
    """Flip each LED state independently with probability ``alpha * p_e``."""
    p = alpha * np.broadcast_to(np.asarray(p_e, dtype=float), np.shape(s1))
    if np.any(p > 1) or np.any(p < 0):
        raise ValueError("alpha * p_e must lie in [0, 1]")
    s1 = np.asarray(s1, dtype=np.int8) ^ (rng.random(np.shape(s1)) < p)
    s2 = np.asarray(s2, dtype=np.int8) ^ (rng.random(np.shape(s2)) < p)
    return s1.astype(np.int8), s2.astype(np.int8)


def transmit_and_sample(waveform: S2pskWaveform, p_e: float, frame_rate: float,
                        rng: np.random.Generator, alpha: float = 1.0,
                        start_time: float = 0.0) -> list:
    """One noisy LED-pair sample per frame over one pass of the waveform.

    Frames are assumed aligned to bit intervals, so frame ``k`` samples bit
    ``k`` at :func:`sample_offset` into the interval.
    """
    if frame_rate <= 0:
        raise ValueError("frame_rate must be positive")
    if not math.isclose(waveform.bit_interval * frame_rate, 1.0, rel_tol=1e-9):
        raise ValueError("bit interval must equal the frame period")
    n = len(waveform.bit_sequence)
    t = start_time + np.arange(n) / frame_rate + sample_offset(waveform)
    s1, s2 = waveform.states(t - start_time)
    s1, s2 = flip_states(s1, s2, p_e, rng, alpha)
    return [S2pskFrameSample(int(a), int(b), float(tt)) for a, b, tt in zip(s1, s2, t)]


def simulate_bits(bits, p_e: float, rng: np.random.Generator, alpha: float = 1.0) -> np.ndarray:
    """Vectorized XOR decode of noisy samples, one per bit."""
    bits = np.asarray(bits, dtype=np.int8)
    s1 = rng.integers(0, 2, size=bits.shape, dtype=np.int8)  # carrier phase at the sample
    s1n, s2n = flip_states(s1, s1 ^ bits, p_e, rng, alpha)
    return s1n ^ s2n


# --- channel -----------------------------------------------------------------

@dataclass(frozen=True)
class ChannelParams:
    kappa: float = 0.5
    noise_psd: float = 2e-20  # W/Hz
    bandwidth: float = 15.0  # Hz
    power_conversion: float = 1.0  # t
    interferer_gains: tuple = ()
    concentrator_gain: float = 1.0  # g(theta)
    filter_transmission: float = 1.0  # T_s(theta)

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        for name in ("kappa", "noise_psd", "power_conversion",
                     "concentrator_gain", "filter_transmission"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if any(h < 0 for h in self.interferer_gains):
            raise ValueError("interferer gains must be non-negative")


def channel_gain(m: float, detector_area: float, distance, incidence, irradiance,
                 concentrator_gain: float = 1.0, filter_transmission: float = 1.0):
    """Lambertian line-of-sight DC gain."""
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise ValueError("distance must be positive")
    cos_t = np.clip(np.cos(incidence), 0.0, None)
    cos_p = np.clip(np.cos(irradiance), 0.0, None)
    h = ((m + 1) * detector_area / (2 * np.pi * distance ** 2)
         * concentrator_gain * filter_transmission * cos_p ** m * cos_t)
    return float(h) if h.ndim == 0 else h


def sinr(channel: ChannelParams, H: float, P_opt: float) -> float:
    noise = channel.power_conversion ** 2 * channel.noise_psd * channel.bandwidth
    interf = sum((channel.kappa * P_opt * h) ** 2 for h in channel.interferer_gains)
    den = noise + interf
    if den <= 0:
        raise ZeroDivisionError("SINR undefined: no noise and no interference")
    return (channel.kappa * P_opt * H) ** 2 / den


def led_state_error_prob(sinr_value):
    """Threshold-detector state error ``Q(sqrt(SINR))``."""
    if isinstance(sinr_value, float):
        if sinr_value < 0:
            raise ValueError("SINR must be non-negative")
        return 0.5 * math.erfc(math.sqrt(sinr_value / 2.0))
    s = np.asarray(sinr_value, dtype=float)
    if np.any(s < 0):
        raise ValueError("SINR must be non-negative")
    p = 0.5 * erfc(np.sqrt(s / 2.0))
    return float(p) if p.ndim == 0 else p


def blur_penalty(sigma_c: float) -> float:
    """SINR scale factor for a Gaussian channel-filter estimate with spread ``sigma_c``."""
    if sigma_c < 0:
        raise ValueError("sigma_c must be non-negative")
    return 1.0 / (1.0 + sigma_c ** 2)


def ber_s2psk(p_e, alpha: float = 1.0):
    q = alpha * np.asarray(p_e, dtype=float)
    if np.any(q > 1) or np.any(q < 0):
        raise ValueError("alpha * p_e must lie in [0, 1]")
    ber = 2.0 * q * (1.0 - q)
    return float(ber) if ber.ndim == 0 else ber


# --- packet reception ----------------------------------------------------------

@dataclass
class PacketReceiver:
    """Reassembles one beacon's repeating packet from per-frame bits.

    Sync is ideal: the receiver knows which chip of the repeating Manchester
    packet each frame carries, so any run of ``2 * PACKET_BITS`` consecutive
    frames covers the whole packet. A gap in visibility restarts the run.
    """

    chips: dict = field(default_factory=dict)
    last_frame: Optional[int] = None
    decoded: Optional[BeaconId] = None

    def push(self, frame: int, chip_index: int, chip: int) -> Optional[BeaconId]:
        if self.decoded is not None:
            return self.decoded
        if self.last_frame is not None and frame != self.last_frame + 1:
            self.chips.clear()
        self.last_frame = frame
        self.chips[chip_index % (2 * PACKET_BITS)] = int(chip)
        if len(self.chips) == 2 * PACKET_BITS:
            stream = [self.chips[i] for i in range(2 * PACKET_BITS)]
            try:
                self.decoded = BeaconId.from_bits(manchester_decode(stream))
            except (ManchesterError, PacketError):
                pass
        return self.decoded


# --- trace CSV -----------------------------------------------------------------

TRACE_FIELDS = ("time", "beacon_id", "s1", "s2")


def write_trace(rows: Iterable[tuple], fh, with_truth: bool = False) -> None:
    """Write ``(time, beacon_id, s1, s2[, bit])`` records."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_FIELDS + (("bit",) if with_truth else ()))
    for r in rows:
        t, bid, s1, s2 = r[:4]
        out = [f"{t:.6f}", bid, int(s1), int(s2)]
        if with_truth:
            out.append(int(r[4]))
        w.writerow(out)


def read_trace(fh) -> Iterator[tuple]:
    """Yield ``(time, beacon_id, s1, s2, bit_or_None)`` from a trace CSV."""
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None:
        return
    header = [h.strip() for h in header]
    if tuple(header[:4]) != TRACE_FIELDS or len(header) not in (4, 5) or (
            len(header) == 5 and header[4] != "bit"):
        raise TraceFormatError(1, f"expected header {','.join(TRACE_FIELDS)}[,bit]")
    ncol = len(header)
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != ncol:
            raise TraceFormatError(line, f"expected {ncol} fields, got {len(row)}")
        try:
            t = float(row[0])
        except ValueError:
            raise TraceFormatError(line, f"bad time {row[0]!r}") from None
        states = []
        for name, cell in zip(("s1", "s2", "bit"), row[2:]):
            cell = cell.strip()
            if cell not in ("0", "1"):
                raise TraceFormatError(line, f"{name} must be 0 or 1, got {cell!r}")
            states.append(int(cell))
        bit = states[2] if ncol == 5 else None
        yield t, row[1].strip(), states[0], states[1], bit


def decode_trace(fh) -> dict:
    """Group a trace by beacon and XOR-decode it.

    Returns ``{beacon_id: (decoded_bits, truth_bits_or_None)}`` in first-seen order.
    """
    out: dict = {}
    for t, bid, s1, s2, bit in read_trace(fh):
        bits, truth = out.setdefault(bid, ([], []))
        bits.append(s1 ^ s2)
        truth.append(bit)
    return {k: (b, None if any(x is None for x in tr) else tr) for k, (b, tr) in out.items()}


def trace_to_string(rows, with_truth: bool = False) -> str:
    buf = io.StringIO()
    write_trace(rows, buf, with_truth)
    return buf.getvalue()
