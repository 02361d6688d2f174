"""Preparation error of a shaped-QAM coherent-state ensemble.

The ensemble density operator is compared with the thermal state reached by
ideal Gaussian modulation at the same mean photon number ``V_A / 2``.  The
double-precision helpers (``coherent_state``, ``ensemble_density``,
``trace_distance``) serve general use and testing; :func:`eps_prep` rebuilds
the difference operator in arbitrary precision because the quantity of
interest sits far below double-precision rounding of the matrix entries.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import gmpy2
import numpy as np
from scipy import optimize, special, stats

from ._validation import check_scalar
from .constellation import build_pcs_qam, scale_to_variance
from .errors import DimensionMismatchError, TruncationError

logger = logging.getLogger(__name__)

__all__ = [
    "TruncatedState",
    "PrepError",
    "PrepOptimum",
    "coherent_state",
    "ensemble_density",
    "thermal_state",
    "trace_distance",
    "eps_prep",
    "minimize_eps_prep",
    "truncation_bound",
    "default_n_max",
]

DEFAULT_PRECISION = 256
MAX_N_MAX = 400


@dataclass(frozen=True)
class TruncatedState:
    """Density operator on the Fock states ``|0> ... |n_max>``."""

    matrix: np.ndarray = field(repr=False)
    trace_defect: float

    @property
    def dim(self):
        return self.matrix.shape[0]

    def mean_photon_number(self):
        return float(np.real(np.sum(np.diag(self.matrix) * np.arange(self.dim))))


def default_n_max(target_VA):
    return 60 if target_VA <= 10 else int(math.ceil(6 * target_VA + 10))


def _coherent_amplitudes(alpha, n_max):
    n = np.arange(n_max + 1)
    alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
    r = np.abs(alpha)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logmag = -0.5 * r**2 + n * np.log(r) - 0.5 * special.gammaln(n + 1)
    logmag = np.where((r == 0) & (n == 0), 0.0, logmag)
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha)[:, None])


def coherent_state(alpha, n_max, tol=1e-12):
    """Projector onto ``|alpha>`` truncated at ``n_max`` photons."""
    n_max = check_scalar(n_max, "n_max", min_val=1, integer=True)
    defect = float(stats.poisson.sf(n_max, abs(alpha) ** 2))
    if defect > tol:
        raise TruncationError(
            f"|alpha|^2={abs(alpha)**2:g} leaves Poisson tail {defect:.3g} beyond n_max={n_max} (tol {tol:g})")
    c = _coherent_amplitudes(alpha, n_max)[0]
    return TruncatedState(matrix=np.outer(c, c.conj()), trace_defect=defect)


def ensemble_density(spec, n_max, tol=1e-10):
    """``sum_k p_k |alpha_k><alpha_k|`` with ``alpha_k = scale * point_k / sqrt(2)``."""
    n_max = check_scalar(n_max, "n_max", min_val=1, integer=True)
    alphas = spec.scale * np.asarray(spec.points) / math.sqrt(2.0)
    probs = np.asarray(spec.probs, dtype=float)
    tails = stats.poisson.sf(n_max, np.abs(alphas) ** 2)
    defect = float(np.sum(probs * tails))
    if defect > tol:
        raise TruncationError(f"ensemble tail {defect:.3g} beyond n_max={n_max} exceeds tol {tol:g}")
    c = _coherent_amplitudes(alphas, n_max)
    rho = (c.T * probs) @ c.conj()
    return TruncatedState(matrix=rho, trace_defect=defect)


def thermal_state(nbar, n_max):
    """Geometric photon statistics of mean ``nbar``; not renormalized."""
    nbar = check_scalar(nbar, "nbar", min_val=0.0)
    n_max = check_scalar(n_max, "n_max", min_val=1, integer=True)
    n = np.arange(n_max + 1)
    if nbar == 0:
        diag = (n == 0).astype(float)
        defect = 0.0
    else:
        ratio = nbar / (nbar + 1.0)
        diag = np.exp(n * np.log(ratio)) / (nbar + 1.0)
        defect = float(ratio ** (n_max + 1))
    return TruncatedState(matrix=np.diag(diag).astype(complex), trace_defect=defect)


def trace_distance(rho, sigma):
    """Half the trace norm of ``rho - sigma``."""
    if rho.dim != sigma.dim:
        raise DimensionMismatchError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
    diff = rho.matrix - sigma.matrix
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


# -- extended-precision path -------------------------------------------------

class _OctantGrid(NamedTuple):
    p: np.ndarray
    q: np.ndarray
    mult: np.ndarray


def _octant(cardinality):
    side = math.isqrt(cardinality)
    axis = np.arange(1, side, 2)
    p, q = np.meshgrid(axis, axis, indexing="ij")
    keep = p >= q
    p, q = p[keep], q[keep]
    # each octant point stands for 8 grid points, diagonal points for 4
    mult = np.where(p == q, 4, 8)
    return _OctantGrid(p, q, mult)


def _shaping_moments(cardinality, nu):
    """Normalization and per-axis second moment, both in mpfr."""
    side = math.isqrt(cardinality)
    nu = gmpy2.mpfr(nu)
    z1 = gmpy2.mpfr(0)
    m2 = gmpy2.mpfr(0)
    for p in range(1, side, 2):
        e = gmpy2.exp(-nu * p * p)
        z1 += e
        m2 += e * p * p
    return (2 * z1) ** 2, m2 / z1


def truncation_bound(cardinality, nu, target_VA, n_max):
    """Upper bound on the trace distance lost by truncating at ``n_max``.

    With ``P`` the projector onto ``n <= n_max`` and ``Q = 1 - P``,
    ``D <= D_P + ||P rho Q||_1 + (tr Q rho + tr Q sigma) / 2`` and
    ``||P rho Q||_1 <= sum_k p_k sqrt(t_k (1 - t_k))`` where ``t_k`` is the
    Poisson tail of point ``k``.  The thermal state is diagonal so contributes
    no off-diagonal block.
    """
    spec = scale_to_variance(build_pcs_qam(cardinality, nu), target_VA)
    mean_photons = np.abs(spec.symbols) ** 2 / 2.0
    tails = stats.poisson.sf(n_max, mean_photons)
    probs = spec.probs
    nbar = target_VA / 2.0
    thermal_tail = (nbar / (nbar + 1.0)) ** (n_max + 1)
    off_diag = np.sum(probs * np.sqrt(tails * (1.0 - tails)))
    return float(off_diag + 0.5 * (np.sum(probs * tails) + thermal_tail))


def _difference_blocks(cardinality, nu, target_VA, n_max, precision):
    """Blocks of ``rho - sigma`` on ``n = r (mod 4)``, rounded to float64.

    Four-fold rotational symmetry zeroes every element with ``m != n (mod 4)``
    and reflection symmetry makes the rest real, so the octant of the grid
    suffices.  The subtraction happens at ``precision`` bits.
    """
    with gmpy2.context(gmpy2.get_context(), precision=precision):
        grid = _octant(cardinality)
        z, m2 = _shaping_moments(cardinality, nu)
        va = gmpy2.mpfr(target_VA)
        s2 = va / (4 * m2)  # |alpha|^2 per unit grid energy
        s = gmpy2.sqrt(s2)
        decay = gmpy2.mpfr(nu) + s2
        npts = grid.p.size
        weights = np.empty(npts, dtype=object)
        coef = np.empty((2 * npts, n_max + 1), dtype=object)
        for k in range(npts):
            p, q = int(grid.p[k]), int(grid.q[k])
            weights[k] = int(grid.mult[k]) * gmpy2.exp(-decay * (p * p + q * q)) / z
            step = gmpy2.mpc(s * p, s * q)
            c = gmpy2.mpc(1)
            for m in range(n_max + 1):
                coef[k, m] = c.real
                coef[npts + k, m] = c.imag
                c = c * step / gmpy2.sqrt(m + 1)
        w = np.concatenate([weights, weights])
        nbar = va / 2
        ratio = nbar / (nbar + 1)
        blocks = []
        for r in range(4):
            idx = np.arange(r, n_max + 1, 4)
            if idx.size == 0:
                continue
            a = coef[:, idx]
            block = a.T @ (a * w[:, None])
            for i, m in enumerate(idx):
                block[i, i] -= ratio ** int(m) / (nbar + 1)
            blocks.append(np.array([[float(v) for v in row] for row in block]))
    return blocks


class PrepError(NamedTuple):
    eps: float
    truncation_bound: float
    n_max: int


def _eps_at(cardinality, nu, target_VA, n_max, precision):
    blocks = _difference_blocks(cardinality, nu, target_VA, n_max, precision)
    return 0.5 * sum(float(np.sum(np.abs(np.linalg.eigvalsh(b)))) for b in blocks)


def _n_max_for(cardinality, nu, target_VA, budget, start):
    n = start
    while truncation_bound(cardinality, nu, target_VA, n) > budget:
        n += 4
        if n > MAX_N_MAX:
            raise TruncationError(
                f"truncation bound cannot reach {budget:.3g} with n_max <= {MAX_N_MAX}")
    return n


def eps_prep(cardinality, nu, target_VA, n_max=None, *, precision=DEFAULT_PRECISION, rel_tol=1e-2):
    """Trace distance between the shaped ensemble and the thermal state.

    With ``n_max=None`` the truncation is escalated until the certified
    truncation bound is below ``rel_tol * eps``; an explicit ``n_max`` is used
    as given and the bound is only reported.
    """
    target_VA = check_scalar(target_VA, "target_VA", min_val=0.0, include_min=False)
    nu = check_scalar(nu, "nu", min_val=0.0)
    if n_max is not None:
        n_max = check_scalar(n_max, "n_max", min_val=1, integer=True)
        eps = _eps_at(cardinality, nu, target_VA, n_max, precision)
        return PrepError(eps, truncation_bound(cardinality, nu, target_VA, n_max), n_max)

    n = default_n_max(target_VA)
    for _ in range(20):
        eps = _eps_at(cardinality, nu, target_VA, n, precision)
        bound = truncation_bound(cardinality, nu, target_VA, n)
        if bound <= rel_tol * eps:
            return PrepError(eps, bound, n)
        # leave headroom so the next pass normally settles
        n = _n_max_for(cardinality, nu, target_VA, 0.5 * rel_tol * eps, n + 4)
    raise TruncationError("truncation escalation did not settle")


class PrepOptimum(NamedTuple):
    nu: float
    eps: float
    truncation_bound: float
    n_max: int


def _grid_search(objective, lo, hi, points=41):
    grid = np.linspace(lo, hi, points)
    vals = np.array([objective(v) for v in grid])
    best = int(np.nanargmin(vals))
    return grid[max(best - 1, 0)], grid[min(best + 1, points - 1)]


def minimize_eps_prep(cardinality, target_VA, n_max=None, *, precision=DEFAULT_PRECISION,
                      rel_tol=1e-2, nu_hi=None):
    """Shaping parameter minimizing :func:`eps_prep` at fixed ``V_A``.

    Bounded Brent search (golden section with parabolic steps) on
    ``log eps`` over ``[0, nu_hi]``; ``nu_hi`` defaults to ``4 / sqrt(K)``,
    a few times the optimum over the usual ``V_A`` range.  The working
    truncation is fixed from a first evaluation and the final point is
    re-evaluated with automatic escalation.
    """
    target_VA = check_scalar(target_VA, "target_VA", min_val=0.0, include_min=False)
    side = math.isqrt(cardinality)
    if nu_hi is None:
        nu_hi = 4.0 / side
    probe = eps_prep(cardinality, 0.25 * nu_hi, target_VA, n_max, precision=precision, rel_tol=rel_tol)
    work_n = probe.n_max

    def objective(nu):
        val = _eps_at(cardinality, max(nu, 0.0), target_VA, work_n, precision)
        return math.log(val) if val > 0 else -1e300

    lo, hi = 0.0, nu_hi
    res = optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-4 * nu_hi})
    if not res.success or not np.isfinite(res.fun) or res.x > hi * (1 - 1e-3):
        logger.info("bracket failure for K=%d V_A=%g, falling back to grid refinement", cardinality, target_VA)
        for _ in range(3):
            lo, hi = _grid_search(objective, lo, hi)
        res = optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-4 * (hi - lo)})
    nu_opt = float(res.x)
    final = eps_prep(cardinality, nu_opt, target_VA, n_max, precision=precision, rel_tol=rel_tol)
    return PrepOptimum(nu_opt, final.eps, final.truncation_bound, final.n_max)
