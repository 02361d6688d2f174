"""Fiber link, lasers and coherent-receiver front end in SNU-calibrated units.

Samples leaving :func:`propagate` are in raw receiver units: SNU amplitudes
multiplied by ``ChannelParams.receiver_gain``.  White noise is drawn per
sample with variance ``N * sps`` so that, after the unit-gain matched filter
used by the receiver, a noise term of ``N`` SNU per quadrature remains per
symbol.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import signal

from ._validation import check_scalar
from .errors import CalibrationError, InvalidArgumentError
from ._frontend import downconvert_filter
from .txframe import DEFAULT_CENTER_FREQUENCY, DEFAULT_SAMPLE_RATE, DEFAULT_SYMBOL_RATE, IQWaveform

__all__ = [
    "ChannelParams",
    "CalibrationRecord",
    "transmittance_from_distance",
    "jones_matrix",
    "propagate",
    "calibrate",
]

# Matches the link budget of the 9.5 km testbed fiber.
PAPER_LINK_LOSS_DB = 2.2
PAPER_LINK_KM = 9.5


def transmittance_from_distance(distance_km, loss_db_per_km):
    distance_km = check_scalar(distance_km, "distance_km", min_val=0.0)
    loss_db_per_km = check_scalar(loss_db_per_km, "loss_db_per_km", min_val=0.0)
    return 10.0 ** (-distance_km * loss_db_per_km / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    distance_km: float = PAPER_LINK_KM
    loss_db_per_km: float = PAPER_LINK_LOSS_DB / PAPER_LINK_KM
    loss_db_total: float | None = None
    eta: float = 0.6
    V_el: float = 0.1
    xi_B_target: float = 0.0
    linewidth_tx: float = 10e3
    linewidth_lo: float = 10e3
    cfo_hz: float = 0.0
    pol_angle: float = 0.0
    pol_phase: float = 0.0
    lf_noise_power: float = 0.0
    lf_noise_corner: float = 20e6
    shot_noise: bool = True
    receiver_gain: float = 37.5
    chunk_samples: int = 1 << 22
    seed: int = 0

    def __post_init__(self):
        check_scalar(self.eta, "eta", min_val=0.0, max_val=1.0, include_min=False)
        for name in ("V_el", "xi_B_target", "linewidth_tx", "linewidth_lo", "lf_noise_power"):
            check_scalar(getattr(self, name), name, min_val=0.0)
        check_scalar(self.receiver_gain, "receiver_gain", min_val=0.0, include_min=False)
        check_scalar(self.lf_noise_corner, "lf_noise_corner", min_val=0.0, include_min=False)
        if self.loss_db_total is not None:
            check_scalar(self.loss_db_total, "loss_db_total", min_val=0.0)

    @property
    def T(self):
        if self.loss_db_total is not None:
            return 10.0 ** (-self.loss_db_total / 10.0)
        return transmittance_from_distance(self.distance_km, self.loss_db_per_km)

    @property
    def noise_snu(self):
        """White noise per quadrature at the receiver, in SNU."""
        return float(self.shot_noise) + self.V_el + self.xi_B_target


@dataclass(frozen=True)
class CalibrationRecord:
    shot_noise_variance_raw: float
    electrical_noise_variance_raw: float
    snu_scale: float
    n_samples: int
    shot_noise_variance_std: float = 0.0
    electrical_noise_variance_std: float = 0.0
    block_id: int = 0

    def __post_init__(self):
        if not self.snu_scale > 0:
            raise CalibrationError("snu_scale must be positive")

    @property
    def V_el(self):
        """Electrical noise expressed in SNU."""
        return self.electrical_noise_variance_raw * self.snu_scale

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def jones_matrix(angle, phase):
    """Unitary polarization rotation by ``angle`` with relative ``phase``."""
    c, s = math.cos(angle), math.sin(angle)
    e = complex(math.cos(phase), math.sin(phase))
    return np.array([[c, -s * e.conjugate()], [s * e, c]], dtype=complex)


def _lf_filter(params, sample_rate):
    # one-pole low-pass at the corner frequency, unit DC gain
    a = math.exp(-2 * math.pi * params.lf_noise_corner / sample_rate)
    return [1.0 - a], [1.0, -a]


def _lf_power_compensation(params, sample_rate):
    # the filter passes a fraction (1-a)/(1+a) of white-noise power
    a = math.exp(-2 * math.pi * params.lf_noise_corner / sample_rate)
    return (1 + a) / (1 - a)


def _white(rng, var, shape):
    sd = math.sqrt(var)
    return sd * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def propagate(wave, params, seed=None):
    """Apply loss, polarization rotation, laser phase noise, CFO and receiver noise.

    ``seed`` overrides ``params.seed``.  Processing runs in chunks of
    ``params.chunk_samples`` with phase and filter state carried across
    chunks, so the result depends on the chunk size only through the order of
    random draws.
    """
    seed = params.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    x = wave.samples
    n = x.shape[1]
    fs = wave.sample_rate
    sps = wave.sample_rate / wave.symbol_rate
    amp = math.sqrt(params.eta * params.T)
    J = jones_matrix(params.pol_angle, params.pol_phase)
    phase_step_var = 2 * math.pi * (params.linewidth_tx + params.linewidth_lo) / fs
    noise_var = params.noise_snu * sps
    lf_var = params.lf_noise_power * sps
    b, a = _lf_filter(params, fs)
    lf_comp = _lf_power_compensation(params, fs)
    zi = np.zeros((2, 1), dtype=complex)
    gain = params.receiver_gain
    out = np.empty_like(x, dtype=complex)
    phase0 = 0.0
    for start in range(0, n, params.chunk_samples):
        stop = min(start + params.chunk_samples, n)
        m = stop - start
        y = amp * (J @ x[:, start:stop])
        idx = np.arange(start, stop)
        phase = 2 * math.pi * params.cfo_hz / fs * idx
        if phase_step_var > 0:
            walk = phase0 + np.cumsum(rng.standard_normal(m) * math.sqrt(phase_step_var))
            phase0 = walk[-1]
            phase = phase + walk
        if phase_step_var > 0 or params.cfo_hz:
            y = y * np.exp(1j * phase)
        if noise_var > 0:
            y = y + _white(rng, noise_var, (2, m))
        if lf_var > 0:
            drive = _white(rng, lf_var * lf_comp, (2, m))
            lf, zi = signal.lfilter(b, a, drive, axis=1, zi=zi)
            y = y + lf
        out[:, start:stop] = gain * y
    return IQWaveform(samples=out, sample_rate=wave.sample_rate, symbol_rate=wave.symbol_rate,
                      center_frequency=wave.center_frequency, lead_symbols=wave.lead_symbols,
                      layout_digest=wave.layout_digest)


def _front_end_variance(rng, var, n, sample_rate, symbol_rate, center_frequency, rolloff, span,
                        chunk=1 << 22):
    # per-quadrature variance of symbol-spaced matched-filter output, pooled over pols
    trim = 2 * (span + 1)
    s1 = np.zeros(4)
    s2 = np.zeros(4)
    count = 0
    for lo in range(0, n, chunk):
        m = min(chunk, n - lo)
        y = downconvert_filter(_white(rng, var, (2, m)), sample_rate, symbol_rate,
                               center_frequency, rolloff, span)
        y = y[:, trim:y.shape[1] - trim:2]
        if y.shape[1] < 2:
            continue
        quads = np.concatenate([y.real, y.imag])
        s1 += quads.sum(axis=1)
        s2 += (quads**2).sum(axis=1)
        count += quads.shape[1]
    variances = (s2 - s1**2 / count) / (count - 1)
    return float(variances.mean()), 4 * count


def calibrate(params, duration_samples=1 << 20, seed=None, *, sample_rate=DEFAULT_SAMPLE_RATE,
              symbol_rate=DEFAULT_SYMBOL_RATE, center_frequency=DEFAULT_CENTER_FREQUENCY,
              rolloff=0.4, span_symbols=32, block_id=0):
    """Shot-noise and electrical-noise calibration through the receiver front end.

    Two consecutive acquisitions are simulated: signal off (shot plus
    electrical noise) and LO off (electrical noise only).  Both pass through
    the same downconversion and matched filter as the data, so ``snu_scale``
    converts matched-filter output variance in raw units into SNU.
    """
    duration_samples = check_scalar(duration_samples, "duration_samples", min_val=100_000, integer=True)
    seed = params.seed if seed is None else seed
    rng = np.random.default_rng([seed, 0xCA1])
    sps = sample_rate / symbol_rate
    g2 = params.receiver_gain**2
    args = (duration_samples, sample_rate, symbol_rate, center_frequency, rolloff, span_symbols)
    shot, n_eff = _front_end_variance(rng, g2 * (float(params.shot_noise) + params.V_el) * sps, *args)
    if params.V_el > 0:
        elec, _ = _front_end_variance(rng, g2 * params.V_el * sps, *args)
    else:
        elec = 0.0
    diff = shot - elec
    if not diff > 0:
        raise CalibrationError(f"shot-noise variance {shot:g} does not exceed electrical {elec:g}")
    # standard error of a Gaussian variance estimate over n_eff/2 samples per quadrature series
    per = n_eff // 4
    return CalibrationRecord(
        shot_noise_variance_raw=shot,
        electrical_noise_variance_raw=elec,
        snu_scale=1.0 / diff,
        n_samples=int(duration_samples),
        shot_noise_variance_std=shot * math.sqrt(2.0 / (4 * per)),
        electrical_noise_variance_std=elec * math.sqrt(2.0 / (4 * per)),
        block_id=block_id,
    )
