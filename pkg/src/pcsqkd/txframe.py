"""Transmit framing: CAZAC preamble, interleaved QPSK pilots, RRC shaping.

Frame layout per polarization::

    [ preamble (L symbols) | unit | unit | ... ]

where each interleaving unit holds ``round(pilot_fraction * period)`` pilots
followed by quantum symbols.  Preamble and pilots share the pilot modulus.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal

from ._validation import check_scalar
from .errors import AliasingError, DimensionMismatchError, InvalidArgumentError

__all__ = [
    "FrameLayout",
    "SymbolFrame",
    "PulseShape",
    "IQWaveform",
    "cazac_sequence",
    "build_frame",
    "rrc_pulse",
    "rrc_taps",
    "shape_and_upconvert",
    "occupied_band",
]

DEFAULT_SYMBOL_RATE = 400e6
DEFAULT_SAMPLE_RATE = 5e9
DEFAULT_CENTER_FREQUENCY = 500e6


def cazac_sequence(length, root):
    """Zadoff-Chu sequence of the given length and root."""
    length = check_scalar(length, "length", min_val=16, integer=True)
    root = check_scalar(root, "root", min_val=1, integer=True)
    if math.gcd(root, length) != 1:
        raise InvalidArgumentError(f"root {root} is not coprime with length {length}")
    k = np.arange(length, dtype=np.int64)
    # reduce the quadratic phase modulo 2L before scaling to keep it exact
    if length % 2:
        phase = (root * k * (k + 1)) % (2 * length)
    else:
        phase = (root * k * k) % (2 * length)
    return np.exp(-1j * np.pi * phase / length)


@dataclass(frozen=True)
class FrameLayout:
    n_quantum: int
    pilot_fraction: float = 0.5
    pilot_gain_db: float = 13.0
    cazac_length: int = 1021
    cazac_roots: tuple = (7, 11)
    interleave_period: int = 2

    def __post_init__(self):
        check_scalar(self.pilot_fraction, "pilot_fraction", min_val=0.0, max_val=1.0,
                     include_min=False, include_max=False)
        check_scalar(self.interleave_period, "interleave_period", min_val=2, integer=True)
        check_scalar(self.n_quantum, "n_quantum", min_val=1, integer=True)
        if not 0 < self.pilots_per_unit < self.interleave_period:
            raise InvalidArgumentError(
                f"pilot_fraction {self.pilot_fraction} leaves no pilot or no quantum slot "
                f"in a unit of {self.interleave_period}")
        if self.n_quantum % self.quantum_per_unit:
            raise InvalidArgumentError(
                f"n_quantum={self.n_quantum} is not a multiple of {self.quantum_per_unit} quantum slots per unit")
        if len(self.cazac_roots) != 2 or self.cazac_roots[0] == self.cazac_roots[1]:
            raise InvalidArgumentError("cazac_roots must be two distinct roots")

    @property
    def pilots_per_unit(self):
        return int(round(self.pilot_fraction * self.interleave_period))

    @property
    def quantum_per_unit(self):
        return self.interleave_period - self.pilots_per_unit

    @property
    def n_units(self):
        return self.n_quantum // self.quantum_per_unit

    @property
    def n_pilots(self):
        return self.n_units * self.pilots_per_unit

    @property
    def frame_length(self):
        return self.cazac_length + self.n_units * self.interleave_period

    @property
    def pilot_gain(self):
        return 10.0 ** (self.pilot_gain_db / 20.0)

    def pilot_mask(self):
        """Boolean mask over the whole frame; preamble positions are False."""
        unit = np.zeros(self.interleave_period, dtype=bool)
        unit[: self.pilots_per_unit] = True
        return np.concatenate([np.zeros(self.cazac_length, dtype=bool), np.tile(unit, self.n_units)])

    def quantum_mask(self):
        mask = ~self.pilot_mask()
        mask[: self.cazac_length] = False
        return mask

    def preamble(self):
        """Unit-modulus ZC preambles, shape ``(2, L)``."""
        return np.vstack([cazac_sequence(self.cazac_length, r) for r in self.cazac_roots])

    def digest(self):
        blob = json.dumps(asdict(self), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def pilot_qpsk(n, seed):
    """Unit-modulus QPSK pilot sequence, shape ``(2, n)``."""
    rng = np.random.default_rng(seed)
    k = rng.integers(0, 4, size=(2, n))
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * k))


@dataclass(frozen=True)
class SymbolFrame:
    symbols: np.ndarray = field(repr=False)
    layout: FrameLayout
    pilot_amplitude: float
    pilot_seed: int

    @property
    def pilot_mask(self):
        return self.layout.pilot_mask()

    @property
    def quantum_mask(self):
        return self.layout.quantum_mask()

    @property
    def preamble_span(self):
        return (0, self.layout.cazac_length)

    @property
    def pilots(self):
        return self.symbols[:, self.pilot_mask]

    @property
    def quantum(self):
        return self.symbols[:, self.quantum_mask]

    @property
    def reference(self):
        """Public symbols (preamble + pilots) with zeros at quantum slots."""
        ref = self.symbols.copy()
        ref[:, self.quantum_mask] = 0
        return ref


def build_frame(quantum, layout, pilot_seed):
    """Interleave a :class:`SymbolBlock` with public pilots behind a ZC preamble.

    The pilot modulus is the ensemble RMS of the quantum constellation raised
    by ``layout.pilot_gain_db``.
    """
    if len(quantum) != layout.n_quantum:
        raise DimensionMismatchError(
            f"quantum block has {len(quantum)} symbols, layout expects {layout.n_quantum}")
    amp = quantum.rms * layout.pilot_gain
    frame = np.empty((2, layout.frame_length), dtype=complex)
    frame[:, : layout.cazac_length] = amp * layout.preamble()
    frame[:, layout.pilot_mask()] = amp * pilot_qpsk(layout.n_pilots, pilot_seed)
    frame[:, layout.quantum_mask()] = quantum.symbols
    return SymbolFrame(symbols=frame, layout=layout, pilot_amplitude=amp, pilot_seed=pilot_seed)


@dataclass(frozen=True)
class PulseShape:
    rolloff: float = 0.4
    span_symbols: int = 32
    samples_per_symbol: float = 25

    def __post_init__(self):
        check_scalar(self.rolloff, "rolloff", min_val=0.0, max_val=1.0)
        check_scalar(self.span_symbols, "span_symbols", min_val=8, integer=True)
        check_scalar(self.samples_per_symbol, "samples_per_symbol", min_val=1.0)


def rrc_pulse(t, rolloff):
    """Root-raised-cosine pulse of unit symbol period, unit energy per symbol."""
    t = np.asarray(t, dtype=float)
    b = rolloff
    out = np.empty_like(t)
    at_zero = np.isclose(t, 0.0, atol=1e-12)
    at_sing = np.isclose(np.abs(4 * b * t), 1.0, atol=1e-10) if b > 0 else np.zeros_like(at_zero)
    reg = ~(at_zero | at_sing)
    tr = t[reg]
    num = np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))
    out[reg] = num / (np.pi * tr * (1 - (4 * b * tr) ** 2))
    out[at_zero] = 1 - b + 4 * b / np.pi
    if b > 0:
        out[at_sing] = (b / np.sqrt(2)) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * b))
                                          + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b)))
    return out


def rrc_taps(shape):
    """Unit-energy RRC taps at ``shape.samples_per_symbol``, odd length, centered.

    The response extends ``shape.span_symbols`` symbols on each side of the peak.
    """
    sps = float(shape.samples_per_symbol)
    half = int(math.floor(shape.span_symbols * sps))
    t = np.arange(-half, half + 1) / sps
    taps = rrc_pulse(t, shape.rolloff)
    return taps / np.sqrt(np.sum(taps**2))


@dataclass(frozen=True)
class IQWaveform:
    """Dual-polarization complex samples (possibly offset from DC)."""

    samples: np.ndarray = field(repr=False)
    sample_rate: float = DEFAULT_SAMPLE_RATE
    symbol_rate: float = DEFAULT_SYMBOL_RATE
    center_frequency: float = DEFAULT_CENTER_FREQUENCY
    lead_symbols: int = 0
    layout_digest: str = ""

    @property
    def samples_per_symbol(self):
        return self.sample_rate / self.symbol_rate

    def __len__(self):
        return self.samples.shape[1]


def rational_ratio(ratio, max_den=1000):
    frac = Fraction(ratio).limit_denominator(max_den)
    if not math.isclose(float(frac), ratio, rel_tol=1e-12):
        raise InvalidArgumentError(f"rate ratio {ratio} is not a small rational")
    return frac


def occupied_band(symbol_rate, rolloff, center_frequency):
    half = (1 + rolloff) * symbol_rate / 2
    return center_frequency - half, center_frequency + half


def shape_and_upconvert(frame, shape, sample_rate=DEFAULT_SAMPLE_RATE,
                        center_frequency=DEFAULT_CENTER_FREQUENCY, symbol_rate=DEFAULT_SYMBOL_RATE):
    """Pulse-shape ``frame`` and shift it to ``center_frequency``.

    Shaping runs at an integer internal rate followed by exact rational
    decimation (e.g. 25 samples/symbol decimated by 2 for 5 GS/s at 400 MBd).
    The frame is padded by the filter half-length on both sides so transients are
    kept.  ``frame`` may be a :class:`SymbolFrame` or a ``(2, n)`` array.
    """
    rolloff = shape.rolloff
    need = (1 + rolloff) * symbol_rate + 2 * abs(center_frequency - (1 + rolloff) * symbol_rate / 2)
    if sample_rate < need * (1 - 1e-12):
        raise AliasingError(f"sample rate {sample_rate:g} below required {need:g}")
    symbols = frame.symbols if isinstance(frame, SymbolFrame) else np.atleast_2d(np.asarray(frame, complex))
    sps = rational_ratio(sample_rate / symbol_rate)
    up, down = sps.numerator, sps.denominator
    taps = rrc_taps(PulseShape(rolloff, shape.span_symbols, up)) * math.sqrt(up)
    lead = shape.span_symbols + 1
    padded = np.pad(symbols, ((0, 0), (lead, lead)))
    wave = signal.resample_poly(padded, up, down, axis=1, window=taps / up)
    if center_frequency:
        step = 1 << 20
        for lo in range(0, wave.shape[1], step):
            n = np.arange(lo, min(lo + step, wave.shape[1]))
            wave[:, lo:lo + step] *= np.exp(2j * np.pi * center_frequency / sample_rate * n)
    digest = frame.layout.digest() if isinstance(frame, SymbolFrame) else ""
    return IQWaveform(samples=wave, sample_rate=sample_rate, symbol_rate=symbol_rate,
                      center_frequency=center_frequency, lead_symbols=lead, layout_digest=digest)
