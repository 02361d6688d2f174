"""Secret key rate of the no-switching (heterodyne) Gaussian protocol.

Trusted-detector model: the receiver efficiency ``eta`` and electrical noise
``V_el`` are not attributed to the eavesdropper.  Bit figures are dual
polarization sums unless a function says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from ._validation import check_scalar
from .channel import transmittance_from_distance
from .errors import CovarianceError, InvalidArgumentError
from .estimation import EstimatedParams, excess_noise_alice, split_epsilon, worst_case_excess_noise

__all__ = [
    "SecurityParams",
    "KeyRateResult",
    "g_function",
    "mutual_information",
    "symplectic_eigenvalues",
    "holevo_bound",
    "finite_size_penalty",
    "secret_fraction",
    "skr",
    "evaluate",
    "distance_sweep",
    "fit_receiver_assumptions",
]

_EIG_TOL = 1e-9


@dataclass(frozen=True)
class SecurityParams:
    eps_total: float = 1e-8
    eps_prep: float = 0.0
    beta: float = 0.95
    split: tuple = (1.0, 1.0, 1.0)
    n_pols: int = 2

    def __post_init__(self):
        check_scalar(self.eps_total, "eps_total", min_val=0.0, max_val=1.0, include_min=False, include_max=False)
        check_scalar(self.eps_prep, "eps_prep", min_val=0.0, max_val=1.0, include_max=False)
        check_scalar(self.beta, "beta", min_val=0.0, max_val=1.0)

    @property
    def epsilons(self):
        return split_epsilon(self.eps_total, self.split)

    @property
    def security_budget(self):
        return self.eps_total + self.eps_prep


@dataclass(frozen=True)
class KeyRateResult:
    I_AB: float
    chi_BE: float
    delta_n: float
    secret_fraction: float
    skr_bps: float
    regime: str
    xi_B: float = float("nan")
    xi_B_used: float = float("nan")


def g_function(x):
    """Von Neumann entropy (bits) of a thermal mode with symplectic eigenvalue ``x``."""
    if x < 1 - _EIG_TOL:
        raise CovarianceError(f"symplectic eigenvalue {x} < 1")
    if x <= 1:
        return 0.0
    a, b = (x + 1) / 2, (x - 1) / 2
    return a * math.log2(a) - b * math.log2(b)


def mutual_information(params, n_pols=2):
    """Shannon rate between Alice and Bob's heterodyne outcomes (bits/symbol)."""
    signal = params.eta * params.T_hat * params.V_A / 2.0
    noise = 1.0 + params.V_el + max(params.xi_B_hat, 0.0)
    return n_pols * math.log2(1.0 + signal / noise)


class _Spectrum(NamedTuple):
    l1: float
    l2: float
    l3: float
    l4: float


def symplectic_eigenvalues(V_A, T, xi_A, eta, V_el):
    """Eigenvalues of Eve's joint state and of its conditional on Bob's heterodyne."""
    if not 0 < T:
        raise CovarianceError("transmittance must be positive")
    V = V_A + 1.0
    chi_line = 1.0 / T - 1.0 + xi_A
    chi_het = (2.0 - eta + 2.0 * V_el) / eta
    chi_tot = chi_line + chi_het / T
    A = V**2 * (1 - 2 * T) + 2 * T + T**2 * (V + chi_line) ** 2
    B = T**2 * (V * chi_line + 1) ** 2
    C = (A * chi_het**2 + B + 1 + 2 * chi_het * (V * math.sqrt(B) + T * (V + chi_line))
         + 2 * T * (V**2 - 1)) / (T * (V + chi_tot)) ** 2
    D = ((V + math.sqrt(B) * chi_het) / (T * (V + chi_tot))) ** 2

    def pair(s, p):
        disc = s * s - 4 * p
        if disc < 0:
            if disc < -1e-9 * s * s:
                raise CovarianceError("complex symplectic spectrum")
            disc = 0.0
        root = math.sqrt(disc)
        hi, lo = (s + root) / 2, (s - root) / 2
        if lo < 0:
            raise CovarianceError("negative squared symplectic eigenvalue")
        return math.sqrt(hi), math.sqrt(lo)

    l1, l2 = pair(A, B)
    l3, l4 = pair(C, D)
    spec = _Spectrum(l1, l2, l3, l4)
    if min(spec) < 1 - _EIG_TOL:
        raise CovarianceError(f"unphysical parameters: symplectic eigenvalues {spec}")
    return spec


def _chi_per_pol(V_A, T, xi_A, eta, V_el):
    l1, l2, l3, l4 = symplectic_eigenvalues(V_A, T, xi_A, eta, V_el)
    return g_function(l1) + g_function(l2) - g_function(l3) - g_function(l4)


def holevo_bound(params, use_worst_case=False, xi_B_worst=None, n_pols=2):
    """Eve's Holevo information on Bob's data (bits/symbol, reverse reconciliation).

    With ``use_worst_case`` the channel-input excess noise is derived from
    ``xi_B_worst`` instead of the point estimate.
    """
    xi_B = xi_B_worst if use_worst_case else params.xi_B_hat
    if xi_B is None:
        raise InvalidArgumentError("use_worst_case requires xi_B_worst")
    xi_A = excess_noise_alice(max(xi_B, 0.0), params.eta, params.T_hat)
    return n_pols * _chi_per_pol(params.V_A, min(params.T_hat, 1.0), xi_A, params.eta, params.V_el)


def finite_size_penalty(n, security):
    """Per-polarization penalty ``7 sqrt(log2(2/eps_smooth) / n)``."""
    n = check_scalar(n, "n", min_val=1e4)
    eps_bar = security.epsilons.eps_smooth
    return 7.0 * math.sqrt(math.log2(2.0 / eps_bar) / n)


def secret_fraction(params, security, regime="finite-size", xi_B_worst=None):
    """Dual-pol secret fraction, clamped at zero, plus its ingredients."""
    if regime not in ("finite-size", "asymptotic"):
        raise InvalidArgumentError(f"unknown regime {regime!r}")
    n_pols = security.n_pols
    I_AB = mutual_information(params, n_pols)
    if regime == "finite-size":
        if xi_B_worst is None:
            xi_B_worst = worst_case_excess_noise(max(params.xi_B_hat, 0.0), params.N,
                                                 security.epsilons.eps_PE, V_el=params.V_el)
        chi = holevo_bound(params, use_worst_case=True, xi_B_worst=xi_B_worst, n_pols=n_pols)
        delta = finite_size_penalty(params.N, security)
        xi_used = xi_B_worst
    else:
        chi = holevo_bound(params, n_pols=n_pols)
        delta = 0.0
        xi_used = params.xi_B_hat
    raw = security.beta * I_AB - chi - n_pols * delta
    return max(raw, 0.0), I_AB, chi, delta, xi_used


def skr(secret_fraction_value, symbol_rate, pilot_fraction):
    """Key rate in bit/s: only quantum slots carry key."""
    for name, v in (("secret_fraction", secret_fraction_value), ("symbol_rate", symbol_rate)):
        check_scalar(v, name, min_val=0.0)
    check_scalar(pilot_fraction, "pilot_fraction", min_val=0.0, max_val=1.0)
    return symbol_rate * (1.0 - pilot_fraction) * max(secret_fraction_value, 0.0)


def evaluate(params, security, regime="finite-size", symbol_rate=400e6, pilot_fraction=0.5,
             xi_B_worst=None):
    sf, I_AB, chi, delta, xi_used = secret_fraction(params, security, regime, xi_B_worst)
    return KeyRateResult(I_AB=I_AB, chi_BE=chi, delta_n=delta, secret_fraction=sf,
                         skr_bps=skr(sf, symbol_rate, pilot_fraction), regime=regime,
                         xi_B=params.xi_B_hat, xi_B_used=xi_used)


@dataclass(frozen=True)
class SweepRow:
    distance_km: float
    T: float
    xi_B: float
    xi_B_worst: float
    finite: KeyRateResult
    asymptotic: KeyRateResult

    def csv_row(self):
        return {
            "distance_km": self.distance_km,
            "T": self.T,
            "xi_B": self.xi_B,
            "xi_B_worst": self.xi_B_worst,
            "I_AB": self.finite.I_AB,
            "chi_BE": self.finite.chi_BE,
            "delta_n": self.finite.delta_n,
            "SF_finite": self.finite.secret_fraction,
            "SF_asymptotic": self.asymptotic.secret_fraction,
            "SKR_bps": self.finite.skr_bps,
        }


SWEEP_COLUMNS = ["distance_km", "T", "xi_B", "xi_B_worst", "I_AB", "chi_BE", "delta_n",
                 "SF_finite", "SF_asymptotic", "SKR_bps"]


def distance_sweep(base, distances, security, loss_db_per_km=2.2 / 9.5, xi_B_worst=None,
                   symbol_rate=400e6, pilot_fraction=0.5, hold="xi_B"):
    """Secret fraction versus fiber length.

    ``hold="xi_B"`` keeps the Bob-referred excess noise of ``base`` (and its
    worst-case bound) fixed; ``hold="xi_A"`` keeps the channel-input excess
    noise fixed and rescales the Bob-side value with ``T``.
    """
    distances = np.asarray(distances, dtype=float)
    if np.any(np.diff(distances) < 0):
        raise InvalidArgumentError("distances must be non-decreasing")
    if hold not in ("xi_B", "xi_A"):
        raise InvalidArgumentError(f"unknown hold mode {hold!r}")
    if xi_B_worst is None:
        xi_B_worst = worst_case_excess_noise(max(base.xi_B_hat, 0.0), base.N,
                                             security.epsilons.eps_PE, V_el=base.V_el)
    rows = []
    for d in distances:
        T = transmittance_from_distance(d, loss_db_per_km)
        if hold == "xi_B":
            xi, xiw = base.xi_B_hat, xi_B_worst
        else:
            ratio = T / base.T_hat
            xi, xiw = base.xi_B_hat * ratio, xi_B_worst * ratio
        p = replace(base, T_hat=T, xi_B_hat=xi, xi_A_hat=excess_noise_alice(xi, base.eta, T))
        fin = evaluate(p, security, "finite-size", symbol_rate, pilot_fraction, xi_B_worst=xiw)
        asy = evaluate(p, security, "asymptotic", symbol_rate, pilot_fraction)
        rows.append(SweepRow(float(d), T, xi, xiw, fin, asy))
    return rows


def zero_crossing(rows, attr="finite"):
    """Distance where the chosen secret fraction first reaches zero.

    Secret fractions are clamped at zero, so the result is the first grid
    distance with zero rate, refined by linear interpolation only when the
    crossing falls exactly between grid points.
    """
    d = np.array([r.distance_km for r in rows])
    sf = np.array([getattr(r, attr).secret_fraction for r in rows])
    idx = np.nonzero(sf <= 0)[0]
    if idx.size == 0:
        return math.inf
    i = idx[0]
    if i == 0:
        return d[0]
    return d[i - 1] + (d[i] - d[i - 1]) * sf[i - 1] / (sf[i - 1] - sf[i])


def fit_receiver_assumptions(target_mean_skr, xi_B_blocks, target_reach_km, *, V_A=5.0, N=1.8e6,
                             T=None, security=None, eta_range=(0.4, 0.8), V_el_range=(0.02, 0.3),
                             grid=17, symbol_rate=400e6, pilot_fraction=0.5):
    """Grid-search ``(eta, V_el)`` reproducing a mean block SKR and a reach.

    Returns ``(eta, V_el, mean_skr, reach_km)`` for the grid point with the
    smallest normalized mismatch.
    """
    security = security or SecurityParams()
    T = transmittance_from_distance(9.5, 2.2 / 9.5) if T is None else T
    xi = np.asarray(xi_B_blocks, dtype=float)
    best = None
    dists = np.linspace(0, 40, 161)
    for eta in np.linspace(*eta_range, grid):
        for vel in np.linspace(*V_el_range, grid):
            rates = []
            for x in xi:
                p = EstimatedParams(V_A=V_A, T_hat=T, eta=eta, V_el=vel, xi_B_hat=x,
                                    xi_A_hat=excess_noise_alice(x, eta, T), N=int(N))
                try:
                    rates.append(evaluate(p, security, "finite-size", symbol_rate, pilot_fraction).skr_bps)
                except CovarianceError:
                    rates.append(0.0)
            mean_rate = float(np.mean(rates))
            base = EstimatedParams(V_A=V_A, T_hat=T, eta=eta, V_el=vel, xi_B_hat=float(xi.max()),
                                   xi_A_hat=excess_noise_alice(float(xi.max()), eta, T), N=int(N))
            reach = zero_crossing(distance_sweep(base, dists, security, symbol_rate=symbol_rate,
                                                 pilot_fraction=pilot_fraction))
            cost = ((mean_rate - target_mean_skr) / target_mean_skr) ** 2 + \
                ((reach - target_reach_km) / target_reach_km) ** 2
            if best is None or cost < best[0]:
                best = (cost, float(eta), float(vel), mean_rate, float(reach))
    return best[1:]
