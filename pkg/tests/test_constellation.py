import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from pcsqkd.constellation import (build_pcs_qam, constellation_variance, grid_second_moment, sample_symbols,
                                  scale_to_variance, write_constellation_csv)
from pcsqkd.errors import InvalidArgumentError

cardinalities = st.sampled_from([4, 16, 64, 256, 1024])


def _prob_map(spec):
    return {(int(p.real), int(p.imag)): pr for p, pr in zip(spec.points, spec.probs)}


def test_qpsk_is_uniform_for_any_nu():
    spec = build_pcs_qam(4, 0.3)
    assert np.allclose(spec.probs, 0.25, atol=1e-15)


def test_nu_zero_is_uniform():
    spec = build_pcs_qam(1024, 0.0)
    assert np.allclose(spec.probs, 1 / 1024, rtol=1e-12)


def test_large_nu_concentrates_on_inner_ring():
    spec = build_pcs_qam(16, 10.0)
    inner = np.isclose(np.abs(spec.points) ** 2, 2)
    assert spec.probs[inner].sum() >= 1 - 1e-10
    assert np.allclose(spec.probs[inner], 0.25, atol=1e-9)


@pytest.mark.parametrize("k", [8, 32, 36, 100, 2])
def test_non_square_cardinality_rejected(k):
    with pytest.raises(InvalidArgumentError):
        build_pcs_qam(k, 0.1)


def test_second_moment_of_uniform_grid():
    assert grid_second_moment(build_pcs_qam(4, 0.0)) == pytest.approx(1.0, abs=1e-15)
    spec = build_pcs_qam(1024, 0.0)
    direct = np.mean(np.arange(-31, 32, 2) ** 2)
    assert direct == pytest.approx((1024 - 1) / 3)
    assert grid_second_moment(spec) == pytest.approx(341.0, rel=1e-13)


def test_variance_decreases_with_nu():
    assert constellation_variance(build_pcs_qam(256, 0.02)) < constellation_variance(build_pcs_qam(256, 0.01))
    nus = np.linspace(0, 0.2, 41)
    v = [constellation_variance(build_pcs_qam(256, nu)) for nu in nus]
    assert np.all(np.diff(v) < 0)


def test_scale_to_variance():
    s4 = scale_to_variance(build_pcs_qam(4, 0.0), 5.0)
    assert s4.scale == pytest.approx(math.sqrt(5 / 2), rel=1e-14)
    s1024 = scale_to_variance(build_pcs_qam(1024, 0.0), 5.0)
    assert s1024.scale == pytest.approx(math.sqrt(5 / (2 * 341)), rel=1e-13)
    again = scale_to_variance(s1024, 5.0)
    assert abs(again.scale - s1024.scale) < 1e-12
    assert constellation_variance(s1024) == pytest.approx(5.0, rel=1e-13)


# nu up to 0.2 keeps the outermost 1024-QAM weight above float underflow
@settings(max_examples=40, deadline=None)
@given(cardinalities, st.floats(0.0, 0.2))
def test_normalization_and_dihedral_symmetry(k, nu):
    spec = build_pcs_qam(k, nu)
    assert abs(spec.probs.sum() - 1) < 1e-12
    assert np.all(spec.probs > 0)
    pm = _prob_map(spec)
    for (p, q), pr in pm.items():
        for image in [(-q, p), (q, p), (-p, q), (p, -q), (-p, -q)]:
            assert pm[image] == pytest.approx(pr, rel=1e-12, abs=1e-300)


@settings(max_examples=25, deadline=None)
@given(cardinalities, st.floats(0.0, 0.5))
def test_equal_energy_points_have_equal_probability(k, nu):
    spec = build_pcs_qam(k, nu)
    energy = np.round(np.abs(spec.points) ** 2).astype(int)
    for e in np.unique(energy):
        pr = spec.probs[energy == e]
        assert np.allclose(pr, pr[0], rtol=1e-12, atol=1e-300)


def test_sampling_is_deterministic(spec1024):
    a = sample_symbols(spec1024, 1000, 7)
    b = sample_symbols(spec1024, 1000, 7)
    assert np.array_equal(a.symbols, b.symbols)
    assert not np.array_equal(a.symbols, sample_symbols(spec1024, 1000, 8).symbols)


def test_symbols_lie_on_scaled_grid(spec1024):
    blk = sample_symbols(spec1024, 2000, 3)
    grid = blk.symbols / spec1024.scale
    assert np.allclose(grid.real, np.round(grid.real), atol=1e-9)
    assert np.all(np.round(grid.real).astype(int) % 2 == 1)


@pytest.mark.slow
def test_sampling_frequencies_and_variance(spec1024):
    n = 10**6
    blk = sample_symbols(spec1024, n, 11)
    counts = np.bincount(blk.indices[0], minlength=1024)
    expect = n * spec1024.probs
    sd = np.sqrt(n * spec1024.probs * (1 - spec1024.probs))
    assert np.all(np.abs(counts - expect) <= 5 * sd)
    # chi-square with sparse cells pooled into one
    small = expect < 5
    e_pool = np.append(expect[~small], expect[small].sum())
    c_pool = np.append(counts[~small], counts[small].sum())
    pval = stats.chisquare(c_pool, e_pool).pvalue
    assert pval > 1e-3
    # per-quadrature variance: V_A/2 per quadrature with x = scale*(p+iq)
    x = blk.symbols_x
    quad = np.concatenate([x.real, x.imag])
    var = np.var(quad)
    se = np.sqrt((np.mean(quad**4) - var**2) / quad.size)
    assert abs(var - 5.0 / 2) < 5 * se


def test_constellation_csv(tmp_path):
    spec = build_pcs_qam(16, 0.1)
    path = tmp_path / "c.csv"
    write_constellation_csv(spec, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "p,q,prob"
    assert len(lines) == 17
    assert sum(float(l.split(",")[2]) for l in lines[1:]) == pytest.approx(1.0, abs=1e-15)
