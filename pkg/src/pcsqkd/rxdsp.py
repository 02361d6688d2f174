"""Receiver DSP: matched filter, CAZAC sync, pilot-trained CMA, CFO and phase recovery.

Pipeline (default order)::

    downconvert + matched filter (2 sps, SNU scaled)
    -> preamble sync (timing + coarse CFO)
    -> pilot periodogram CFO -> 2x2 CMA on preamble/pilots
    -> CFO re-estimate -> pilot-aided phase tracking -> de-interleave

The equalizer taps are normalized so that white receiver noise keeps unit
gain, which preserves the shot-noise calibration through the chain.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._frontend import OUTPUT_SPS, downconvert_filter, matched_filter_taps
from ._validation import check_dual_pol, check_scalar
from .errors import CFOEstimationError, EqualizerDivergenceError, InvalidArgumentError, SyncError
from .txframe import (DEFAULT_CENTER_FREQUENCY, DEFAULT_SAMPLE_RATE, DEFAULT_SYMBOL_RATE,
                      PulseShape, SymbolFrame, pilot_qpsk, rrc_taps)

__all__ = [
    "DspConfig",
    "DspReport",
    "SyncResult",
    "matched_filter_and_downconvert",
    "noise_autocorrelation",
    "synchronize",
    "estimate_cfo",
    "cma_train",
    "cma_apply",
    "cma_equalize",
    "estimate_phase",
    "run_dsp",
    "CMAEqualizer",
    "PilotAidedReceiver",
]

STAGE_ORDERS = ("cfo-first", "cma-first")


@dataclass(frozen=True)
class DspConfig:
    cma_taps: int = 9
    cma_step: float = 1e-3
    cma_passes: int = 3
    cma_anneal: float = 1.0
    cma_leakage: float = 1.0
    periodogram_fft_size: int = 1 << 17
    phase_pilot_window: int = 16
    rolloff: float = 0.4
    span_symbols: int = 32
    sample_rate: float = DEFAULT_SAMPLE_RATE
    symbol_rate: float = DEFAULT_SYMBOL_RATE
    center_frequency: float = DEFAULT_CENTER_FREQUENCY
    stage_order: str = "cfo-first"
    sync_search_samples: int = 4096
    sync_psr_min: float = 3.0
    cfo_peak_db_min: float = 6.0
    cm_tolerance: float = 0.01
    divergence_window: int = 10_000

    def __post_init__(self):
        check_scalar(self.cma_taps, "cma_taps", min_val=1, integer=True)
        if self.cma_taps % 2 == 0:
            raise InvalidArgumentError("cma_taps must be odd")
        check_scalar(self.cma_step, "cma_step", min_val=0.0, max_val=0.1, include_min=False)
        check_scalar(self.cma_passes, "cma_passes", min_val=1, integer=True)
        check_scalar(self.cma_anneal, "cma_anneal", min_val=0.0, max_val=1.0, include_min=False)
        check_scalar(self.periodogram_fft_size, "periodogram_fft_size", min_val=256, integer=True)
        check_scalar(self.phase_pilot_window, "phase_pilot_window", min_val=1, integer=True)
        if self.stage_order not in STAGE_ORDERS:
            raise InvalidArgumentError(f"stage_order must be one of {STAGE_ORDERS}")


@dataclass
class DspReport:
    timing_offset: float = float("nan")
    cfo_estimate: float = float("nan")
    cfo_stages: dict = field(default_factory=dict)
    sync_psr: float = float("nan")
    phase_track: np.ndarray = field(default=None, repr=False)
    cma_converged: bool = False
    cma_residual: float = float("nan")
    cma_swapped: bool = False
    cma_reinitialized: bool = False
    snr_estimate_db: tuple = (float("nan"), float("nan"))
    warnings: list = field(default_factory=list)
    stage: str = "init"

    def to_dict(self):
        d = asdict(self)
        d["phase_track"] = None if self.phase_track is None else np.round(self.phase_track, 12).tolist()
        d["snr_estimate_db"] = [float(v) for v in self.snr_estimate_db]
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


# ---------------------------------------------------------------- front end

def matched_filter_and_downconvert(wave, config=None, frequency_offset=0.0):
    """Baseband 2-samples/symbol streams of a received :class:`IQWaveform`.

    The mixer runs at ``wave.center_frequency + frequency_offset``.  The
    output keeps the raw receiver units of ``wave``.
    """
    config = config or DspConfig()
    return downconvert_filter(wave.samples, wave.sample_rate, wave.symbol_rate,
                              wave.center_frequency + frequency_offset, config.rolloff, config.span_symbols)


def noise_autocorrelation(config, n_lags):
    """Normalized autocorrelation of matched-filtered white noise at T/2 lags."""
    up, down, _ = matched_filter_taps(config.sample_rate, config.symbol_rate, config.rolloff,
                                      config.span_symbols)
    sps_int = int(round(config.sample_rate / config.symbol_rate * up))
    h = rrc_taps(PulseShape(config.rolloff, config.span_symbols, sps_int))
    step = sps_int // OUTPUT_SPS
    full = np.correlate(h, h, mode="full")
    mid = len(full) // 2
    return np.array([full[mid + k * step] for k in range(n_lags)]) / full[mid]


# --------------------------------------------------------------------- sync

@dataclass(frozen=True)
class SyncResult:
    start: int
    fraction: float
    cfo_hz: float
    psr: float

    @property
    def timing_offset(self):
        return self.start + self.fraction


def _parabolic(ym, y0, yp):
    den = ym - 2 * y0 + yp
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (ym - yp) / den, -0.5, 0.5))


def _sync_metric(stream, refs, lags, nfft):
    """Product over roots of the pol-summed power spectrum of lagged products."""
    L = refs.shape[1]
    k2 = 2 * np.arange(L)
    metric = np.ones((len(lags), nfft))
    for r in range(refs.shape[0]):
        acc = np.zeros((len(lags), nfft))
        for p in range(stream.shape[0]):
            seg = stream[p][lags[:, None] + k2[None, :]] * refs[r].conj()[None, :]
            acc += np.abs(np.fft.fft(seg, nfft, axis=1)) ** 2
        metric *= acc
    return metric


def synchronize(stream, preamble_reference, config=None, *, symbol_rate=None):
    """Locate the preamble in a 2-samples/symbol stream.

    The ZC timing/frequency ambiguity is removed by multiplying the metrics
    of the two preamble roots, whose ambiguity ridges differ.  Returns the
    start sample, a parabolic sub-sample fraction, and the coarse CFO.
    """
    config = config or DspConfig()
    symbol_rate = symbol_rate or config.symbol_rate
    stream = np.atleast_2d(np.asarray(stream, dtype=complex))
    refs = np.atleast_2d(np.asarray(preamble_reference, dtype=complex))
    L = refs.shape[1]
    span = 2 * L
    n_lags = min(config.sync_search_samples, stream.shape[1] - span)
    if n_lags < 8:
        raise SyncError("stream shorter than the preamble")
    nfft_c = 1 << int(math.ceil(math.log2(L)))
    nfft_c *= 2
    best, best_lag, coarse = -1.0, 0, None
    block = max(1, (1 << 22) // (L * stream.shape[0]))
    peaks = np.empty(n_lags)
    for lo in range(0, n_lags, block):
        lags = np.arange(lo, min(lo + block, n_lags))
        m = _sync_metric(stream, refs, lags, nfft_c)
        peaks[lags] = m.max(axis=1)
    best_lag = int(np.argmax(peaks))
    best = peaks[best_lag]
    far = np.abs(np.arange(n_lags) - best_lag) >= 4
    side = peaks[far].max() if far.any() else 0.0
    psr = best / side if side > 0 else math.inf
    if not psr >= config.sync_psr_min:
        raise SyncError(f"preamble peak-to-sidelobe ratio {psr:.2f} below {config.sync_psr_min}")
    # fine frequency on a longer transform, then parabolic sub-sample timing
    nfft_f = 8 * nfft_c
    lags = np.arange(max(best_lag - 1, 0), min(best_lag + 2, n_lags))
    m = _sync_metric(stream, refs, lags, nfft_f)
    row = m[list(lags).index(best_lag)]
    kb = int(np.argmax(row))
    delta = _parabolic(row[kb - 1], row[kb], row[(kb + 1) % nfft_f])
    freq_bin = kb + delta
    if freq_bin > nfft_f / 2:
        freq_bin -= nfft_f
    cfo = freq_bin / nfft_f * symbol_rate
    frac = 0.0
    if len(lags) == 3:
        vals = m[:, kb]
        frac = _parabolic(*np.sqrt(np.sqrt(vals)))
    return SyncResult(start=best_lag, fraction=frac, cfo_hz=float(cfo), psr=float(psr))


# ---------------------------------------------------------------------- CFO

def _periodogram(products, positions, nfft_sym):
    """Bartlett-averaged periodogram of products placed at symbol positions."""
    positions = np.asarray(positions, dtype=np.int64)
    spec = np.zeros(nfft_sym)
    seg_id = (positions - positions[0]) // nfft_sym
    for s in np.unique(seg_id):
        sel = seg_id == s
        for row in np.atleast_2d(products):
            buf = np.zeros(nfft_sym, dtype=complex)
            buf[(positions[sel] - positions[0]) % nfft_sym] = row[sel]
            spec += np.abs(np.fft.fft(buf)) ** 2
    return spec


def estimate_cfo(pilot_received, pilot_known, config=None, *, positions=None, symbol_rate=None,
                 pilots_per_unit=1, interleave_period=2, cross_pol=False):
    """Carrier offset from the zero-padded periodogram of ``r_k conj(a_k)``.

    ``positions`` are the pilots' symbol indices (regular alternation by
    default).  The frequency grid spacing is ``pilot_rate / fft_size``; the
    search covers ``|f| < pilot_rate / 2``.  With ``cross_pol`` every
    received polarization is paired with every reference (for use before
    polarization demultiplexing).
    """
    config = config or DspConfig()
    symbol_rate = symbol_rate or config.symbol_rate
    r = np.atleast_2d(np.asarray(pilot_received, dtype=complex))
    a = np.atleast_2d(np.asarray(pilot_known, dtype=complex))
    if r.shape[-1] != a.shape[-1]:
        raise InvalidArgumentError("received and known pilots differ in length")
    n = r.shape[-1]
    if n < 1 << 14:
        raise InvalidArgumentError(f"need at least 16384 pilots for CFO estimation, got {n}")
    if positions is None:
        positions = np.arange(n) * (interleave_period // pilots_per_unit)
    pilot_rate = symbol_rate * pilots_per_unit / interleave_period
    ratio = interleave_period / pilots_per_unit
    nfft_sym = int(round(config.periodogram_fft_size * ratio))
    if cross_pol:
        products = np.array([rp * ap.conj() for rp in r for ap in a])
    else:
        products = r * a.conj()
    spec = _periodogram(products, positions, nfft_sym)
    freqs = np.fft.fftfreq(nfft_sym, d=1.0 / symbol_rate)
    allowed = np.abs(freqs) < pilot_rate / 2
    masked = np.where(allowed, spec, -1.0)
    k = int(np.argmax(masked))
    floor = np.median(spec[allowed])
    if not spec[k] > floor * 10 ** (config.cfo_peak_db_min / 10):
        raise CFOEstimationError(
            f"periodogram peak {10 * np.log10(spec[k] / floor):.1f} dB above floor, need {config.cfo_peak_db_min}")
    delta = _parabolic(spec[k - 1], spec[k], spec[(k + 1) % nfft_sym])
    return float(freqs[k] + delta * symbol_rate / nfft_sym)


def _rotate(x, freq, symbol_rate, positions):
    return x * np.exp(-2j * np.pi * freq / symbol_rate * np.asarray(positions))


# ---------------------------------------------------------------------- CMA

@numba.njit(cache=True)
def _cma_kernel(x, centers, w, mu, r2, err, w_sum, accumulate, leak):
    n_taps = w.shape[2]
    half = n_taps // 2
    shrink = 1.0 - mu * leak
    for n in range(centers.shape[0]):
        c = centers[n] - half
        for p in range(2):
            o = 0j
            for q in range(2):
                for j in range(n_taps):
                    o += w[p, q, j] * x[q, c + j]
            m = o.real * o.real + o.imag * o.imag - r2
            err[n, p] = m
            g = mu * o * m
            for q in range(2):
                for j in range(n_taps):
                    w[p, q, j] -= g * np.conj(x[q, c + j])
                    if j != half:
                        w[p, q, j] *= shrink
        if accumulate:
            w_sum += w
    return w


def _spike(n_taps):
    w = np.zeros((2, 2, n_taps), dtype=complex)
    w[0, 0, n_taps // 2] = 1.0
    w[1, 1, n_taps // 2] = 1.0
    return w


def _orthogonal_complement(w):
    out = w.copy()
    out[1, 1] = np.conj(w[0, 0][::-1])
    out[1, 0] = -np.conj(w[0, 1][::-1])
    return out


def cma_apply(stream, taps, centers):
    """Butterfly output at the given T/2 sample centers, shape ``(2, len(centers))``."""
    n_taps = taps.shape[2]
    half = n_taps // 2
    centers = np.asarray(centers, dtype=np.int64)
    out = np.zeros((2, len(centers)), dtype=complex)
    for q in range(2):
        for j in range(n_taps):
            xs = stream[q, centers - half + j]
            for p in range(2):
                out[p] += taps[p, q, j] * xs
    return out


def cma_train(stream, train_centers, config=None, init=None, *, check_divergence=True):
    """Run the pilot-trained CMA over ``train_centers`` for ``config.cma_passes`` passes.

    The step shrinks by ``config.cma_anneal`` after every pass.  Returns the
    tap average over the final pass and the CM error trace of that pass.
    Only samples inside the tap windows of the training centers are read.
    """
    config = config or DspConfig()
    x = np.ascontiguousarray(stream, dtype=complex)
    centers = np.ascontiguousarray(train_centers, dtype=np.int64)
    half = config.cma_taps // 2
    if centers.min() - half < 0 or centers.max() + half >= x.shape[1]:
        raise InvalidArgumentError("training centers too close to the stream edges")
    w = _spike(config.cma_taps) if init is None else np.array(init, dtype=complex)
    err = np.zeros((len(centers), 2))
    prev = None
    w_sum = np.zeros_like(w)
    for ps in range(config.cma_passes):
        last = ps == config.cma_passes - 1
        if last and ps > 0:
            prev = err.copy()
        mu = config.cma_step * config.cma_anneal**ps
        w = _cma_kernel(x, centers, w, mu, 1.0, err, w_sum, last, config.cma_leakage)
        if check_divergence and ps == 0:
            _check_divergence(err, config.divergence_window)
    return w_sum / len(centers), err, prev


def _check_divergence(err, window):
    mag = np.abs(err).mean(axis=1)
    if not np.all(np.isfinite(mag)):
        raise EqualizerDivergenceError("CMA error became non-finite")
    if mag.size >= 2 * window:
        first = mag[:window].mean()
        tail = mag[-window:].mean()
        if tail > 10 * max(first, 1e-3):
            raise EqualizerDivergenceError(f"CMA error grew from {first:.3g} to {tail:.3g}")


def _noise_gain(taps, rn):
    n = taps.shape[2]
    R = rn[np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])]
    return np.array([sum(np.real(taps[p, q].conj() @ R @ taps[p, q]) for q in range(2)) for p in range(2)])


def _segmented_corr(x, ref, seg=8):
    n = (len(ref) // seg) * seg
    v = (x[:n] * ref[:n].conj()).reshape(-1, seg).sum(axis=1)
    return float(np.sum(np.abs(v) ** 2))


def cma_equalize(stream, train_centers, output_centers, config=None, *, preamble=None,
                 preamble_centers=None):
    """Pilot-trained 2x2 CMA with noise-gain normalization and pol-swap fix.

    ``stream`` must already be at 2 samples/symbol; ``train_centers`` are the
    sample indices of preamble/pilot symbols.  Returns ``(outputs, taps, info)``
    where outputs are symbol-rate samples at ``output_centers``.
    """
    config = config or DspConfig()
    stream = check_dual_pol(stream, "stream")
    scale = 1.0 / math.sqrt(np.mean(np.abs(stream[:, train_centers]) ** 2))
    xs = stream * scale
    taps, err, prev_err = cma_train(xs, train_centers, config)
    info = {"reinitialized": False, "swapped": False}
    probe = cma_apply(xs, taps, train_centers[: min(len(train_centers), 20000)])
    c = abs(np.vdot(probe[1], probe[0])) / math.sqrt(np.vdot(probe[0], probe[0]).real *
                                                     np.vdot(probe[1], probe[1]).real)
    if c > 0.5:
        taps, err, prev_err = cma_train(xs, train_centers, config, init=_orthogonal_complement(taps))
        info["reinitialized"] = True
    if preamble is not None:
        pre = cma_apply(xs, taps, preamble_centers)
        keep = _segmented_corr(pre[0], preamble[0]) + _segmented_corr(pre[1], preamble[1])
        swap = _segmented_corr(pre[0], preamble[1]) + _segmented_corr(pre[1], preamble[0])
        if swap > keep:
            taps = taps[::-1].copy()
            info["swapped"] = True
    rn = noise_autocorrelation(config, config.cma_taps)
    taps = taps / np.sqrt(_noise_gain(taps, rn))[:, None, None]
    # convergence: CM error over the last 1000 pilots, compared with the previous pass
    mag = np.abs(err).mean(axis=1)
    w = min(1000, len(mag) // 2)
    last = mag[-w:].mean()
    prev = np.abs(prev_err).mean(axis=1)[-w:].mean() if prev_err is not None else mag[-2 * w:-w].mean()
    info["residual"] = float(last)
    info["converged"] = bool(abs(last - prev) <= config.cm_tolerance * prev)
    return cma_apply(stream, taps, output_centers), taps, info


# -------------------------------------------------------------------- phase

def estimate_phase(pilot_received, pilot_known, quantum_received, pilot_positions, quantum_positions,
                   config=None):
    """Pilot-aided ML phase with linear interpolation onto quantum slots.

    Per window of ``config.phase_pilot_window`` pilots the estimate is
    ``arg sum r_k conj(a_k)``; the track is unwrapped and interpolated.
    Returns ``(corrected_quantum, corrected_pilots, track, warnings)``.
    """
    config = config or DspConfig()
    r = np.atleast_2d(pilot_received)
    a = np.atleast_2d(pilot_known)
    qr = np.atleast_2d(quantum_received)
    W = config.phase_pilot_window
    kernel = np.ones(W)
    pilot_positions = np.asarray(pilot_positions, dtype=float)
    # an even "same" window is centered half a pilot before its output index
    idx = np.arange(len(pilot_positions)) - (0.5 if W % 2 == 0 else 0.0)
    track_positions = np.interp(idx, np.arange(len(pilot_positions)), pilot_positions)
    tracks, qs, ps, warnings = [], [], [], []
    for p in range(r.shape[0]):
        u = r[p] * a[p].conj()
        if W > 1:
            u = np.convolve(u, kernel, mode="same")
        raw = np.angle(u)
        steps = np.angle(np.exp(1j * np.diff(raw)))
        if np.any(np.abs(steps) > np.pi / 2):
            warnings.append(f"pol {p}: phase step above pi/2 between adjacent pilots (tracking loss)")
        theta = np.unwrap(raw)
        tracks.append(theta)
        ps.append(r[p] * np.exp(-1j * np.interp(pilot_positions, track_positions, theta)))
        qs.append(qr[p] * np.exp(-1j * np.interp(quantum_positions, track_positions, theta)))
    return np.array(qs), np.array(ps), np.array(tracks), warnings


# ----------------------------------------------------------------- pipeline

def _pilot_snr_db(pilots, known, pilot_gain):
    out = []
    for r, a in zip(pilots, known):
        g = np.vdot(a, r) / len(a)
        noise = np.mean(np.abs(r - g * a) ** 2)
        out.append(float(10 * np.log10(abs(g) ** 2 / noise / pilot_gain**2)))
    return tuple(out)


def run_dsp(wave, layout, config, calibration, pilot_seed, report=None):
    """Recover the SNU-normalized frame from a received waveform.

    Returns ``(SymbolFrame, DspReport)``.  On failure the raised exception
    carries the partial report as ``exc.report``.
    """
    config = config or DspConfig()
    report = report if report is not None else DspReport()
    try:
        return _run_dsp(wave, layout, config, calibration, pilot_seed, report)
    except Exception as exc:  # annotate and propagate
        exc.report = report
        raise


def _run_dsp(wave, layout, config, calibration, pilot_seed, report):
    Rs = wave.symbol_rate
    report.stage = "frontend"
    stream = matched_filter_and_downconvert(wave, config) * math.sqrt(calibration.snu_scale)
    preamble = layout.preamble()
    known = pilot_qpsk(layout.n_pilots, pilot_seed)
    L = layout.cazac_length
    pmask = layout.pilot_mask()
    qmask = layout.quantum_mask()
    sym = np.arange(layout.frame_length)
    pil_pos, q_pos, pre_pos = sym[pmask], sym[qmask], sym[:L]
    ppu, period = layout.pilots_per_unit, layout.interleave_period

    report.stage = "sync"
    sync = synchronize(stream, preamble, config, symbol_rate=Rs)
    report.sync_psr = sync.psr
    start = int(round(sync.start + sync.fraction))
    report.timing_offset = sync.start + sync.fraction
    report.cfo_stages["sync"] = sync.cfo_hz
    half = config.cma_taps // 2
    need = start + 2 * (layout.frame_length - 1) + half + 1
    centers = start + 2 * sym
    cfo = sync.cfo_hz

    def pad(x):
        return np.pad(x, ((0, 0), (0, need - x.shape[1]))) if need > x.shape[1] else x

    stream = pad(stream)
    if config.stage_order == "cfo-first":
        report.stage = "cfo"
        t = np.arange(stream.shape[1]) - start
        coarse = stream * np.exp(-1j * np.pi * cfo / Rs * t)
        df = estimate_cfo(coarse[:, centers[pmask]], known, config, positions=pil_pos, symbol_rate=Rs,
                          pilots_per_unit=ppu, interleave_period=period, cross_pol=True)
        report.cfo_stages["pilot_pre_cma"] = df
        cfo += df
        del coarse
    # re-center the matched filter on the estimated carrier
    report.stage = "frontend"
    stream = pad(matched_filter_and_downconvert(wave, config, frequency_offset=cfo)
                 * math.sqrt(calibration.snu_scale))

    report.stage = "cma"
    train = np.concatenate([centers[:L], centers[pmask]])
    out, taps, info = cma_equalize(stream, train, centers, config, preamble=preamble,
                                   preamble_centers=centers[:L])
    report.cma_converged = info["converged"]
    report.cma_residual = info["residual"]
    report.cma_swapped = info["swapped"]
    report.cma_reinitialized = info["reinitialized"]

    report.stage = "cfo"
    df = estimate_cfo(out[:, pmask], known, config, positions=pil_pos, symbol_rate=Rs,
                      pilots_per_unit=ppu, interleave_period=period)
    report.cfo_stages["pilot_post_cma"] = df
    out = _rotate(out, df, Rs, sym)
    cfo += df
    report.cfo_estimate = cfo

    report.stage = "phase"
    q, p, track, warns = estimate_phase(out[:, pmask], known, out[:, qmask], pil_pos, q_pos, config)
    report.phase_track = track
    report.warnings.extend(warns)
    report.snr_estimate_db = _pilot_snr_db(p, known, layout.pilot_gain)

    symbols = np.zeros((2, layout.frame_length), dtype=complex)
    symbols[:, pmask] = p
    symbols[:, qmask] = q
    pre = out[:, :L]
    symbols[:, :L] = pre
    amp = float(np.mean(np.abs(np.sum(p * known.conj(), axis=1) / p.shape[1])))
    report.stage = "done"
    return SymbolFrame(symbols=symbols, layout=layout, pilot_amplitude=amp, pilot_seed=pilot_seed), report


def write_symbols(path, frame):
    """Binary float64 ``Ix,Qx,Iy,Qy`` per symbol plus a ``.mask`` pilot sidecar."""
    s = frame.symbols
    np.stack([s[0].real, s[0].imag, s[1].real, s[1].imag], axis=1).astype("<f8").tofile(path)
    frame.pilot_mask.astype(np.uint8).tofile(str(path) + ".mask")


# -------------------------------------------------------------- estimators

class CMAEqualizer(BaseEstimator):
    """Pilot-trained 2x2 butterfly CMA as a fit/transform estimator.

    ``fit(stream, train_centers)`` learns ``taps_``; ``transform(stream,
    centers)`` applies the (noise-normalized) taps at symbol centers.
    """

    def __init__(self, n_taps=9, step=1e-3, passes=3, rolloff=0.4, span_symbols=32):
        self.n_taps = n_taps
        self.step = step
        self.passes = passes
        self.rolloff = rolloff
        self.span_symbols = span_symbols

    def _config(self):
        return DspConfig(cma_taps=self.n_taps, cma_step=self.step, cma_passes=self.passes,
                         rolloff=self.rolloff, span_symbols=self.span_symbols)

    def fit(self, stream, train_centers):
        stream = check_dual_pol(stream, "stream")
        train_centers = np.asarray(train_centers, dtype=np.int64)
        _, self.taps_, self.info_ = cma_equalize(stream, train_centers, train_centers[:1], self._config())
        return self

    def transform(self, stream, centers):
        if not hasattr(self, "taps_"):
            raise NotFittedError("CMAEqualizer is not fitted yet")
        return cma_apply(check_dual_pol(stream, "stream"), self.taps_, np.asarray(centers, dtype=np.int64))


class PilotAidedReceiver(BaseEstimator):
    """Full receiver chain; ``fit(wave, calibration)`` stores ``report_`` and ``frame_``."""

    def __init__(self, layout=None, pilot_seed=0, config=None):
        self.layout = layout
        self.pilot_seed = pilot_seed
        self.config = config

    def fit(self, wave, calibration):
        if self.layout is None:
            raise InvalidArgumentError("PilotAidedReceiver needs a frame layout")
        self.frame_, self.report_ = run_dsp(wave, self.layout, self.config or DspConfig(), calibration,
                                            self.pilot_seed)
        return self

    def transform(self, wave=None, calibration=None):
        if wave is not None:
            self.fit(wave, calibration)
        if not hasattr(self, "frame_"):
            raise NotFittedError("PilotAidedReceiver is not fitted yet")
        return self.frame_.quantum

    def fit_transform(self, wave, calibration):
        return self.fit(wave, calibration).transform()
