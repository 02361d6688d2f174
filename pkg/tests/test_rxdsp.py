import math

import numpy as np
import pytest
from scipy import signal

from conftest import make_link
from pcsqkd.channel import ChannelParams, calibrate, propagate
from pcsqkd.constellation import sample_symbols
from pcsqkd.errors import CFOEstimationError, SyncError
from pcsqkd.estimation import estimate_parameters
from pcsqkd.rxdsp import (CMAEqualizer, DspConfig, PilotAidedReceiver, cma_equalize, cma_train,
                          estimate_cfo, estimate_phase, matched_filter_and_downconvert, run_dsp,
                          synchronize)
from pcsqkd.txframe import FrameLayout, IQWaveform, PulseShape, build_frame, pilot_qpsk, shape_and_upconvert

RS = 400e6
PILOT_BIN = 200e6 / 2**17


def qpsk(n, seed):
    return pilot_qpsk(n, seed)


def _frame_stream(spec, n, seed, **channel):
    """Front-end output of a transmitted frame; returns (frame, stream, centers)."""
    blk, layout, frame, rx, _ = make_link(spec, n, seed, **channel)
    stream = matched_filter_and_downconvert(rx)
    centers = 2 * rx.lead_symbols + 2 * np.arange(layout.frame_length)
    return frame, stream, centers


# ------------------------------------------------------------------ front end

def test_noiseless_loopback():
    sym = np.sqrt(0.5) * qpsk(3000, 1)
    wave = shape_and_upconvert(sym, PulseShape(0.4, 32))
    out = matched_filter_and_downconvert(wave)
    lead = wave.lead_symbols
    rec = out[:, 2 * lead: 2 * (lead + 3000): 2]
    err = np.abs(rec - sym)
    assert err.max() / np.sqrt(np.mean(np.abs(sym) ** 2)) < 1e-3


def test_white_noise_output_is_raised_cosine_shaped():
    rng = np.random.default_rng(5)
    n = 1 << 22
    noise = rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))
    wave = IQWaveform(samples=noise, center_frequency=0.0)
    out = matched_filter_and_downconvert(wave)
    f, psd = signal.welch(out, fs=2 * RS, nperseg=512, return_onesided=False, axis=1)
    psd = psd.mean(axis=0)
    gamma = 0.4
    a = np.abs(f)
    lo, hi = (1 - gamma) * RS / 2, (1 + gamma) * RS / 2
    rc = np.where(a <= lo, 1.0, np.where(a >= hi, 0.0, 0.5 * (1 + np.cos(np.pi / (gamma * RS) * (a - lo)))))
    psd = psd / psd[a <= lo].mean()
    resid = np.sqrt(np.mean((psd - rc) ** 2) / np.mean(rc**2))
    assert resid < 0.05


def test_center_frequency_mismatch_shifts_tone():
    fs, fc = 5e9, 500e6
    t = np.arange(1 << 20) / fs
    tone = np.exp(2j * np.pi * fc * t)
    wave = IQWaveform(samples=np.vstack([tone, tone]), center_frequency=fc)
    y = matched_filter_and_downconvert(wave, frequency_offset=1e6)[0, 2000:-2000]
    f = np.angle(np.sum(y[1:] * y[:-1].conj())) * 2 * RS / (2 * np.pi)
    assert f == pytest.approx(-1e6, abs=1.0)


# ----------------------------------------------------------------------- sync

@pytest.fixture(scope="module")
def sync_wave(spec1024):
    blk = sample_symbols(spec1024, 4000, 7)
    layout = FrameLayout(n_quantum=4000)
    frame = build_frame(blk, layout, 8)
    return layout, shape_and_upconvert(frame, PulseShape(0.4, 32))


def _delayed(wave, delay_samples, seed):
    """Band-limited delay by an arbitrary number of waveform samples, plus receiver noise."""
    whole = int(math.floor(delay_samples))
    frac = delay_samples - whole
    x = np.pad(wave.samples, ((0, 0), (whole, 4096)))
    if frac:
        f = np.fft.fftfreq(x.shape[1])
        x = np.fft.ifft(np.fft.fft(x, axis=1) * np.exp(-2j * np.pi * f * frac), axis=1)
    rng = np.random.default_rng(seed)
    x = x + 0.05 * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))
    return IQWaveform(samples=x, center_frequency=wave.center_frequency)


def test_sync_integer_delay(sync_wave):
    layout, wave = sync_wave
    sps_out = wave.sample_rate / RS / 2  # waveform samples per stream sample
    base = synchronize(matched_filter_and_downconvert(_delayed(wave, 0, 1)), layout.preamble())
    shifted = synchronize(matched_filter_and_downconvert(_delayed(wave, 1234 * sps_out, 1)), layout.preamble())
    assert shifted.start - base.start == 1234
    assert shifted.psr > 3


def test_sync_fractional_delay(sync_wave):
    layout, wave = sync_wave
    sps_out = wave.sample_rate / RS / 2
    base = synchronize(matched_filter_and_downconvert(_delayed(wave, 0, 2)), layout.preamble())
    shifted = synchronize(matched_filter_and_downconvert(_delayed(wave, 1234.5 * sps_out, 2)),
                          layout.preamble())
    assert shifted.timing_offset - base.timing_offset == pytest.approx(1234.5, abs=0.1)


def test_sync_on_noise_fails():
    rng = np.random.default_rng(3)
    noise = rng.standard_normal((2, 20000)) + 1j * rng.standard_normal((2, 20000))
    with pytest.raises(SyncError):
        synchronize(noise, FrameLayout(n_quantum=100).preamble())


# ------------------------------------------------------------------------ CMA

def _cma(spec, n=20000, seed=11, **channel):
    kw = dict(loss_db_total=0.0, eta=1.0, V_el=0.0, shot_noise=False, linewidth_tx=0.0, linewidth_lo=0.0)
    kw.update(channel)
    frame, stream, centers = _frame_stream(spec, n, seed, **kw)
    layout = frame.layout
    L = layout.cazac_length
    pmask = layout.pilot_mask()
    train = np.concatenate([centers[:L], centers[pmask]])
    out, taps, info = cma_equalize(stream, train, centers, preamble=layout.preamble(), preamble_centers=centers[:L])
    return frame, out[:, pmask], taps, info


def _leakage_db(out, ref):
    """Cross-pol over co-pol correlation power, worst output."""
    def c(a, b):
        return abs(np.vdot(b, a)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real)
    return max(10 * np.log10(c(out[p], ref[1 - p]) / c(out[p], ref[p])) for p in range(2))


def test_cma_identity_channel(spec1024):
    frame, pilots, taps, info = _cma(spec1024)
    mod = np.abs(pilots) / np.mean(np.abs(pilots), axis=1, keepdims=True)
    assert np.sqrt(np.mean((mod - 1) ** 2)) < 0.02
    center = taps.shape[2] // 2
    for p in range(2):
        assert np.sum(np.abs(taps[p, 1 - p]) ** 2) < 0.01 * abs(taps[p, p, center]) ** 2
    assert _leakage_db(pilots, frame.pilots) < -20


def test_cma_inverts_45_degree_rotation(spec1024):
    frame, pilots, _, _ = _cma(spec1024, pol_angle=np.pi / 4)
    assert _leakage_db(pilots, frame.pilots) < -20


def test_cma_resolves_polarization_swap(spec1024):
    frame, pilots, _, info = _cma(spec1024, pol_angle=np.pi / 2)
    assert _leakage_db(pilots, frame.pilots) < -20


def test_cma_taps_depend_only_on_training_windows(spec1024):
    # one pilot every 8 symbols leaves quantum slots outside every training window
    blk = sample_symbols(spec1024, 17500, 3)
    layout = FrameLayout(n_quantum=17500, pilot_fraction=0.125, interleave_period=8)
    frame = build_frame(blk, layout, 4)
    stream = matched_filter_and_downconvert(shape_and_upconvert(frame, PulseShape(0.4, 32)))
    lead = 33
    stream /= np.sqrt(np.mean(np.abs(stream[:, 2 * lead: 2 * (lead + layout.cazac_length): 2]) ** 2))
    centers = 2 * lead + 2 * np.arange(layout.frame_length)
    train = np.concatenate([centers[: layout.cazac_length], centers[layout.pilot_mask()]])
    half = DspConfig().cma_taps // 2
    read = np.zeros(stream.shape[1], dtype=bool)
    for k in range(-half, half + 1):
        read[train + k] = True
    assert (~read[centers[layout.quantum_mask()]]).any()
    rng = np.random.default_rng(9)
    perturbed = stream.copy()
    perturbed[:, ~read] = rng.standard_normal((2, (~read).sum())) * 5
    a, _, _ = cma_train(stream, train)
    b, _, _ = cma_train(perturbed, train)
    assert np.array_equal(a, b)


def test_cma_estimator(spec1024):
    frame, stream, centers = _frame_stream(spec1024, 20000, 12, loss_db_total=0.0, eta=1.0, V_el=0.0,
                                           shot_noise=False, linewidth_tx=0.0, linewidth_lo=0.0)
    pmask = frame.layout.pilot_mask()
    eq = CMAEqualizer().fit(stream, centers[pmask])
    assert eq.taps_.shape == (2, 2, 9)
    out = eq.transform(stream, centers[pmask])
    assert out.shape == (2, pmask.sum())
    assert CMAEqualizer(step=1e-3).get_params()["n_taps"] == 9


# ------------------------------------------------------------------------ CFO

def _pilot_series(cfo, seed, n=1 << 17, snr_db=13.0):
    rng = np.random.default_rng(seed)
    known = qpsk(n, seed)
    pos = 2 * np.arange(n)
    sd = 10 ** (-snr_db / 20) / math.sqrt(2)
    noise = sd * (rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n)))
    return known * np.exp(2j * np.pi * cfo / RS * pos) + noise, known


@pytest.mark.parametrize("cfo", [20e6, 0.0, 50e6, -50e6, -20e6])
def test_cfo_within_one_bin(cfo):
    r, a = _pilot_series(cfo, 21)
    est = estimate_cfo(r, a)
    assert abs(est - cfo) < PILOT_BIN


def test_cfo_needs_a_peak():
    # Bartlett-averaged periodogram; a single unaveraged segment of noise peaks about 12 dB over its median
    rng = np.random.default_rng(4)
    n = 1 << 15
    r = rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))
    with pytest.raises(CFOEstimationError):
        estimate_cfo(r, qpsk(n, 4), DspConfig(periodogram_fft_size=256))
    r, a = _pilot_series(20e6, 5, n=n)
    assert abs(estimate_cfo(r, a, DspConfig(periodogram_fft_size=256)) - 20e6) < 200e6 / 256


# ---------------------------------------------------------------------- phase

def _phase_case(theta_fn, n=4000, window=1):
    known = qpsk(n, 31)
    pil_pos = 2 * np.arange(n)
    q_pos = pil_pos + 1
    rng = np.random.default_rng(32)
    q = rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))
    cfg = DspConfig(phase_pilot_window=window)
    return (known * np.exp(1j * theta_fn(pil_pos)), known, q * np.exp(1j * theta_fn(q_pos)), pil_pos, q_pos,
            cfg, q)


@pytest.mark.parametrize("window", [1, 16])
def test_phase_constant_offset(window):
    r, a, qr, pp, qp, cfg, q = _phase_case(lambda t: np.full(t.shape, np.pi / 8), window=window)
    qc, pc, track, warns = estimate_phase(r, a, qr, pp, qp, cfg)
    assert np.max(np.abs(qc - q)) < 1e-10
    assert np.max(np.abs(pc - a)) < 1e-10
    assert not warns


@pytest.mark.parametrize("window", [1, 16])
def test_phase_ramp_tracked(window):
    slope = 2 * np.pi * 50e3 / RS
    r, a, qr, pp, qp, cfg, q = _phase_case(lambda t: slope * t + 0.3, window=window)
    qc, _, _, _ = estimate_phase(r, a, qr, pp, qp, cfg)
    inner = slice(window, -window)
    resid = np.angle(qc[:, inner] * q[:, inner].conj())
    assert np.sqrt(np.mean(resid**2)) < 1e-3


def test_phase_correction_idempotent():
    slope = 2 * np.pi * 10e3 / RS
    r, a, qr, pp, qp, cfg, q = _phase_case(lambda t: slope * t - 1.0, window=16)
    qc, pc, _, _ = estimate_phase(r, a, qr, pp, qp, cfg)
    qc2, pc2, track2, _ = estimate_phase(pc, a, qc, pp, qp, cfg)
    assert np.sqrt(np.mean(track2[:, 16:-16] ** 2)) < 1e-6
    assert np.sqrt(np.mean(np.abs(qc2 - qc)[:, 16:-16] ** 2)) < 1e-6


def test_phase_jump_warns():
    r, a, qr, pp, qp, cfg, _ = _phase_case(lambda t: np.where(t > 4000, 2.0, 0.0))
    _, _, _, warns = estimate_phase(r, a, qr, pp, qp, cfg)
    assert warns and "tracking loss" in warns[0]


def test_phase_track_unwrapped():
    slope = 2 * np.pi * 3e6 / RS
    r, a, qr, pp, qp, cfg, _ = _phase_case(lambda t: slope * t)
    _, _, track, _ = estimate_phase(r, a, qr, pp, qp, cfg)
    assert np.all(np.abs(np.diff(track, axis=1)) < np.pi)
    assert track[0, -1] > 10


# ------------------------------------------------------------------- pipeline

def _run(spec, n, seed, config=None, **channel):
    blk, layout, frame, rx, params = make_link(spec, n, seed, **channel)
    cal = calibrate(params, duration_samples=len(rx), seed=seed + 3000)
    rec, report = run_dsp(rx, layout, config or DspConfig(), cal, seed + 1000)
    return frame, rec, report, params


def test_noiseless_pipeline_identity(spec1024):
    channel = dict(loss_db_total=0.0, eta=1.0, V_el=0.0, shot_noise=False, linewidth_tx=0.0, linewidth_lo=0.0,
                   cfo_hz=5e6, pol_angle=0.3)
    blk, layout, frame, rx, params = make_link(spec1024, 20000, 41, **channel)
    cal = calibrate(ChannelParams(V_el=0.0), duration_samples=len(rx), seed=1)
    rec, report = run_dsp(rx, layout, DspConfig(), cal, 1041)
    g = np.vdot(frame.pilots, rec.pilots) / np.vdot(frame.pilots, frame.pilots)
    q = rec.quantum / g
    err = np.sqrt(np.mean(np.abs(q - frame.quantum) ** 2) / np.mean(np.abs(frame.quantum) ** 2))
    assert err < 1e-3
    assert report.cfo_estimate == pytest.approx(5e6, abs=PILOT_BIN)


def test_pipeline_deterministic(spec1024):
    kw = dict(cfo_hz=3e6, pol_angle=0.7)
    _, rec_a, rep_a, _ = _run(spec1024, 20000, 51, **kw)
    _, rec_b, rep_b, _ = _run(spec1024, 20000, 51, **kw)
    assert rep_a.to_json() == rep_b.to_json()
    assert np.array_equal(rec_a.symbols, rec_b.symbols)


def test_full_impairment_stack(spec1024):
    n = 100_000
    frame, rec, report, params = _run(spec1024, n, 61, cfo_hz=20e6, pol_angle=np.pi / 4,
                                      loss_db_total=-10 * math.log10(0.6), xi_B_target=0.012)
    assert report.cma_converged and report.stage == "done"
    # laser phase noise (2 x 10 kHz) spreads the pilot line; the residual is left to phase tracking
    assert report.cfo_estimate == pytest.approx(20e6, abs=10e3)
    est = estimate_parameters(frame.quantum, rec.quantum, params.eta, params.V_el, 5.0)
    sigma = (1 + params.V_el + 0.012) * math.sqrt(2 / (4 * n))
    assert abs(est.xi_B_hat - 0.012) < 5 * sigma
    assert est.T_hat == pytest.approx(0.6, abs=0.02)


def test_pilot_aided_receiver_matches_pipeline(spec1024):
    blk, layout, frame, rx, params = make_link(spec1024, 20000, 71)
    cal = calibrate(params, duration_samples=len(rx), seed=5)
    q = PilotAidedReceiver(layout=layout, pilot_seed=71 + 1000).fit_transform(rx, cal)
    rec, _ = run_dsp(rx, layout, DspConfig(), cal, 71 + 1000)
    assert np.array_equal(q, rec.quantum)


@pytest.mark.slow
def test_phase_noise_penalty_within_budget(spec1024):
    # Wiener phase noise 2 x 10 kHz at 400 MBd, 100 blocks
    xi = []
    for b in range(100):
        frame, rec, _, params = _run(spec1024, 20000, 1000 + b, loss_db_total=-10 * math.log10(0.6),
                                     xi_B_target=0.012)
        xi.append(estimate_parameters(frame.quantum, rec.quantum, params.eta, params.V_el, 5.0).xi_B_hat)
    xi = np.array(xi)
    penalty = xi.mean() - 0.012
    sem = xi.std(ddof=1) / math.sqrt(xi.size)
    assert penalty + 2 * sem < 5e-3
