"""Probabilistically shaped square QAM with Maxwell-Boltzmann point weights.

Symbols are stored as heterodyne-referred amplitudes ``x = scale * (p + iq)``.
A coherent state ``|alpha>`` maps to ``x = sqrt(2) * alpha``, so the SNU
quadrature ``2 Re(alpha) = sqrt(2) Re(x)`` has variance ``V_A = E|x|^2`` and the
mean photon number is ``V_A / 2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_scalar
from .errors import InvalidArgumentError

__all__ = [
    "ConstellationSpec",
    "SymbolBlock",
    "build_pcs_qam",
    "grid_second_moment",
    "constellation_variance",
    "scale_to_variance",
    "sample_symbols",
    "write_constellation_csv",
]


@dataclass(frozen=True)
class ConstellationSpec:
    """Points and probabilities of a (shaped) constellation.

    ``points`` are on the unit-spaced odd-integer grid; ``scale`` converts them
    to heterodyne-referred amplitudes.
    """

    cardinality: int
    nu: float
    points: np.ndarray = field(repr=False)
    probs: np.ndarray = field(repr=False)
    scale: float = 1.0

    @property
    def symbols(self):
        return self.scale * self.points

    @property
    def side(self):
        return int(round(math.sqrt(self.cardinality)))


@dataclass(frozen=True)
class SymbolBlock:
    """Dual-polarization block of i.i.d. constellation draws."""

    symbols_x: np.ndarray = field(repr=False)
    symbols_y: np.ndarray = field(repr=False)
    seed: int
    spec: ConstellationSpec = field(repr=False)
    indices: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return self.symbols_x.size

    @property
    def symbols(self):
        """Stacked ``(2, n)`` array, X polarization first."""
        return np.vstack([self.symbols_x, self.symbols_y])

    @property
    def rms(self):
        """Ensemble RMS amplitude of the constellation (not of this draw)."""
        return math.sqrt(constellation_variance(self.spec))


def _odd_grid(side):
    return np.arange(-(side - 1), side, 2, dtype=float)


def build_pcs_qam(cardinality, nu):
    """Square ``cardinality``-QAM with ``P(p+iq) ~ exp(-nu (p^2 + q^2))``."""
    cardinality = check_scalar(cardinality, "cardinality", min_val=4, integer=True)
    nu = check_scalar(nu, "nu", min_val=0.0)
    side = math.isqrt(cardinality)
    if side * side != cardinality or side & (side - 1):
        raise InvalidArgumentError(
            f"cardinality must be an even power of two (square QAM), got {cardinality}")
    axis = _odd_grid(side)
    # separable weights keep the normalization exact to rounding
    w1 = np.exp(-nu * (axis**2 - 1.0))
    w1 /= w1.sum()
    q, p = np.meshgrid(axis, axis, indexing="ij")
    points = (p + 1j * q).ravel()
    probs = np.outer(w1, w1).ravel()
    probs /= probs.sum()
    return ConstellationSpec(cardinality=cardinality, nu=nu, points=points, probs=probs, scale=1.0)


def grid_second_moment(spec):
    """``scale^2 * E[p^2]``: the per-axis second moment of the scaled grid."""
    return float(spec.scale**2 * np.sum(spec.probs * spec.points.real**2))


def constellation_variance(spec):
    """Modulation variance ``V_A`` in SNU, ``2 * scale^2 * E[p^2]``."""
    return 2.0 * grid_second_moment(spec)


def scale_to_variance(spec, target_VA):
    """Return a copy of ``spec`` whose scale yields ``V_A == target_VA``."""
    target_VA = check_scalar(target_VA, "target_VA", min_val=0.0, include_min=False)
    moment = float(np.sum(spec.probs * spec.points.real**2))
    return replace(spec, scale=math.sqrt(target_VA / (2.0 * moment)))


def sample_symbols(spec, n, seed):
    """Draw ``n`` i.i.d. symbols per polarization from ``spec.probs``."""
    n = check_scalar(n, "n", min_val=1, integer=True)
    rng = np.random.default_rng(seed)
    idx = rng.choice(spec.points.size, size=(2, n), p=spec.probs)
    sym = spec.scale * spec.points[idx]
    return SymbolBlock(symbols_x=sym[0], symbols_y=sym[1], seed=seed, spec=spec, indices=idx)


def write_constellation_csv(spec, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p", "q", "prob"])
        for pt, pr in zip(spec.points, spec.probs):
            writer.writerow([int(pt.real), int(pt.imag), f"{pr:.17g}"])
