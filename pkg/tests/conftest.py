import numpy as np
import pytest

from pcsqkd.constellation import build_pcs_qam, scale_to_variance

# near-optimal 1024-QAM shaping at V_A = 5, pinned so tests skip the optimizer
NU_1024 = 0.0198


@pytest.fixture(scope="session")
def spec1024():
    return scale_to_variance(build_pcs_qam(1024, NU_1024), 5.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def ideal_quantum(rx, layout, cal, rolloff=0.4, span=32):
    """Genie receiver: matched filter at known timing, no impairment recovery."""
    from pcsqkd._frontend import downconvert_filter

    y = downconvert_filter(rx.samples, rx.sample_rate, rx.symbol_rate, rx.center_frequency, rolloff, span)
    sym = y[:, 2 * rx.lead_symbols: 2 * (rx.lead_symbols + layout.frame_length): 2]
    return sym[:, layout.quantum_mask()] * np.sqrt(cal.snu_scale)


def make_link(spec, n, seed, *, rolloff=0.4, span=32, **channel):
    """Transmit ``n`` quantum symbols through a channel; returns (block, layout, frame, rx, params)."""
    from pcsqkd.channel import ChannelParams, propagate
    from pcsqkd.constellation import sample_symbols
    from pcsqkd.txframe import FrameLayout, PulseShape, build_frame, shape_and_upconvert

    blk = sample_symbols(spec, n, seed)
    layout = FrameLayout(n_quantum=n)
    frame = build_frame(blk, layout, seed + 1000)
    wave = shape_and_upconvert(frame, PulseShape(rolloff, span))
    params = ChannelParams(**channel)
    rx = propagate(wave, params, seed=seed + 2000)
    return blk, layout, frame, rx, params
