"""Channel parameter estimation from aligned sent/received quantum symbols.

The received variance per quadrature obeys
``V_B = eta*T/2 * V_A + 1 + V_el + xi_B`` (heterodyne, SNU).  Alice's
quadratures are ``s = sqrt(2) * x`` so that ``y = sqrt(eta*T/2) * s + noise``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_dual_pol, check_same_length, check_scalar
from .errors import AlignmentError

__all__ = [
    "EstimatedParams",
    "EpsilonSplit",
    "split_epsilon",
    "estimate_parameters",
    "excess_noise_alice",
    "worst_case_excess_noise",
    "ExcessNoiseEstimator",
]

MIN_CORRELATION = 0.01


@dataclass(frozen=True)
class EstimatedParams:
    V_A: float
    T_hat: float
    eta: float
    V_el: float
    xi_B_hat: float
    xi_A_hat: float
    N: int
    V_B_hat: float = float("nan")
    V_A_empirical: float = float("nan")
    block_id: int = 0

    @property
    def flagged_negative(self):
        return self.xi_B_hat < 0

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EpsilonSplit:
    eps_PE: float
    eps_smooth: float
    eps_cor: float


def split_epsilon(eps_total, weights=(1.0, 1.0, 1.0)):
    """Divide the total security parameter among estimation, smoothing and correctness."""
    eps_total = check_scalar(eps_total, "eps_total", min_val=0.0, max_val=1.0,
                             include_min=False, include_max=False)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    return EpsilonSplit(*(eps_total * w))


def excess_noise_alice(xi_B, eta, T):
    """Refer Bob-side excess noise to the channel input: ``2 xi_B / (eta T)``."""
    eta = check_scalar(eta, "eta", min_val=0.0, include_min=False)
    T = check_scalar(T, "T", min_val=0.0, include_min=False)
    return 2.0 * xi_B / (eta * T)


def estimate_parameters(sent, received, eta, V_el, V_A, block_id=0):
    """Correlation estimate of ``T`` and variance estimate of ``xi_B``.

    ``sent`` holds Alice's heterodyne-referred symbols, ``received`` Bob's
    SNU-normalized symbols, both ``(2, N)`` and aligned on quantum slots.
    The signal term uses the empirical modulation variance of the block.
    """
    sent = check_dual_pol(sent, "sent")
    received = check_dual_pol(received, "received")
    check_same_length(sent, received, ("sent", "received"))
    s = math.sqrt(2.0) * sent
    power_s = float(np.sum(np.abs(s) ** 2))
    power_y = float(np.sum(np.abs(received) ** 2))
    t_hat = float(np.sum((received * s.conj()).real)) / power_s
    corr = t_hat * math.sqrt(power_s / power_y) if power_y > 0 else 0.0
    if not corr > MIN_CORRELATION:
        raise AlignmentError(f"sent/received correlation {corr:.3g} below {MIN_CORRELATION}")
    T_hat = 2.0 * t_hat**2 / eta
    quads = np.concatenate([received.real, received.imag])
    V_B_hat = float(np.mean(np.var(quads, axis=1, ddof=1)))
    n = sent.shape[1]
    V_A_emp = power_s / (4.0 * n)  # per-quadrature variance of s
    xi_B = V_B_hat - eta * T_hat / 2.0 * V_A_emp - 1.0 - V_el
    return EstimatedParams(V_A=float(V_A), T_hat=T_hat, eta=float(eta), V_el=float(V_el),
                           xi_B_hat=xi_B, xi_A_hat=excess_noise_alice(xi_B, eta, T_hat),
                           N=int(n), V_B_hat=V_B_hat, V_A_empirical=V_A_emp, block_id=block_id)


def worst_case_excess_noise(xi_B_hat, N, eps_PE, total_noise_variance=None, V_el=0.1):
    """One-sided upper confidence bound on ``xi_B`` at failure probability ``eps_PE``.

    The standard error is that of a Gaussian variance estimator applied to
    the total noise ``1 + V_el + xi_B``.
    """
    N = check_scalar(N, "N", min_val=1e4)
    eps_PE = check_scalar(eps_PE, "eps_PE", min_val=0.0, max_val=1.0, include_min=False, include_max=False)
    if total_noise_variance is None:
        total_noise_variance = 1.0 + V_el + xi_B_hat
    sigma = total_noise_variance * math.sqrt(2.0 / N)
    return xi_B_hat + stats.norm.isf(eps_PE) * sigma


class ExcessNoiseEstimator(BaseEstimator):
    """Estimator wrapper around :func:`estimate_parameters`.

    ``fit(sent, received)`` stores ``T_hat_``, ``xi_B_hat_``, ``xi_B_worst_``
    and the full ``params_`` record.
    """

    def __init__(self, eta=0.6, V_el=0.1, V_A=5.0, eps_total=1e-8):
        self.eta = eta
        self.V_el = V_el
        self.V_A = V_A
        self.eps_total = eps_total

    def fit(self, sent, received):
        self.params_ = estimate_parameters(sent, received, self.eta, self.V_el, self.V_A)
        self.T_hat_ = self.params_.T_hat
        self.xi_B_hat_ = self.params_.xi_B_hat
        eps_pe = split_epsilon(self.eps_total).eps_PE
        self.xi_B_worst_ = worst_case_excess_noise(self.xi_B_hat_, self.params_.N, eps_pe, V_el=self.V_el)
        return self

    def estimate(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("ExcessNoiseEstimator is not fitted yet")
        return self.params_
