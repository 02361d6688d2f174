"""Digital downconversion and RRC matched filtering shared by receiver and calibration."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.fft import next_fast_len

from .txframe import PulseShape, rational_ratio, rrc_taps

OUTPUT_SPS = 2


def matched_filter_taps(sample_rate, symbol_rate, rolloff, span_symbols, out_sps=OUTPUT_SPS):
    """Polyphase window and rates for a unit-gain matched filter to ``out_sps``.

    Returns ``(up, down, window)`` for :func:`scipy.signal.resample_poly`.
    A symbol of amplitude ``a`` shaped by the transmitter comes out with
    amplitude ``a``; white noise of per-sample variance ``s2`` comes out with
    variance ``s2 / sps_in`` at the symbol-spaced instants.
    """
    sps_in = sample_rate / symbol_rate
    ratio = rational_ratio(out_sps * symbol_rate / sample_rate)
    up, down = ratio.numerator, ratio.denominator
    sps_int = sps_in * up
    if not math.isclose(sps_int, round(sps_int)):
        raise ValueError(f"non-integer internal rate {sps_int} samples/symbol")
    sps_int = int(round(sps_int))
    pulse = rrc_taps(PulseShape(rolloff, span_symbols, sps_int)) * math.sqrt(sps_int)
    # resample_poly scales the window by `up`
    return up, down, pulse / (sps_in * up)


def _mix(x, freq, sample_rate, offset):
    n = np.arange(offset, offset + x.shape[-1])
    return x * np.exp(-2j * np.pi * freq / sample_rate * n)


@lru_cache(maxsize=8)
def _response(n_seg, up, down, window_bytes):
    """Matched-filter response on the FFT grid of an ``n_seg`` input block.

    The window runs at ``up`` times the input rate; its DTFT is sampled on
    the input grid by a zero-padded transform of the centered taps.
    """
    win = np.frombuffer(window_bytes) * up
    m = up * n_seg
    buf = np.zeros(m)
    half = len(win) // 2
    buf[: half + 1] = win[half:]
    buf[m - half:] = win[:half]
    full = np.fft.rfft(buf).real
    n_out = n_seg * up // down
    k = np.fft.fftfreq(n_out, 1.0 / n_out).astype(int)
    return full[np.abs(k)], k % n_seg


def downconvert_filter(samples, sample_rate, symbol_rate, center_frequency, rolloff, span_symbols,
                       chunk=1 << 20):
    """Mix to baseband and matched-filter to 2 samples/symbol.

    Output sample ``j`` sits at input time ``j * sps_in / 2``.  Filtering is
    done in the frequency domain on zero-padded overlapping blocks, which
    equals direct polyphase filtering with the same taps because the
    matched filter is band-limited well inside the output Nyquist band.
    """
    x = np.atleast_2d(samples)
    up, down, win = matched_filter_taps(sample_rate, symbol_rate, rolloff, span_symbols)
    n = x.shape[1]
    margin = -(-((len(win) // 2) // up + 1) // down) * down
    # block length: a fast FFT size that is a multiple of the decimation factor
    n_seg = next_fast_len(-(-(min(chunk, n) + 2 * margin) // down), True) * down
    step = n_seg - 2 * margin
    resp, bins = _response(n_seg, up, down, win.tobytes())
    n_out = -(-n * up // down)
    seg_out = n_seg * up // down
    off = margin * up // down
    out = np.empty((x.shape[0], n_out), dtype=complex)
    for start in range(0, n, step):
        stop = min(start + step, n)
        lo, hi = start - margin, min(stop + margin, n)
        buf = np.zeros((x.shape[0], n_seg), dtype=complex)
        src = x[:, max(lo, 0):hi]
        if center_frequency:
            src = _mix(src, center_frequency, sample_rate, max(lo, 0))
        buf[:, max(lo, 0) - lo: max(lo, 0) - lo + src.shape[1]] = src
        spec = np.fft.fft(buf, axis=1)
        y = np.fft.ifft(spec[:, bins] * resp, axis=1) * (seg_out / (n_seg * up))
        j0 = start * up // down
        j1 = min(n_out, j0 + step * up // down)
        out[:, j0:j1] = y[:, off:off + (j1 - j0)]
    return out
